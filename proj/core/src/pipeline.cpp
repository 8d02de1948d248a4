#include "spultra/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "spultra/io.hpp"
#include "spultra/metrics.hpp"

namespace spultra {

namespace fs = std::filesystem;

Method parse_method(const std::string& name) {
    if (name == "fbp") return Method::fbp;
    if (name == "pwls-ep") return Method::pwls_ep;
    if (name == "pwls-ultra") return Method::pwls_ultra;
    if (name == "spultra") return Method::spultra;
    throw ConfigError("unknown method '" + name + "' (expected spultra, pwls-ultra, pwls-ep or fbp)");
}

std::string to_string(Method m) {
    switch (m) {
    case Method::fbp: return "fbp";
    case Method::pwls_ep: return "pwls-ep";
    case Method::pwls_ultra: return "pwls-ultra";
    case Method::spultra: return "spultra";
    }
    return "?";
}

RoiMask evaluation_roi(const ImageGrid& truth, const std::string& roi) {
    if (roi == "full") return RoiMask::full(truth.dims);
    RoiMask m = RoiMask::full(truth.dims, "body");
    for (std::size_t j = 0; j < truth.values.size(); ++j) m.inside[j] = truth.values[j] > 0.0 ? 1 : 0;
    return m;
}

namespace {

constexpr Method kAllMethods[] = {Method::fbp, Method::pwls_ep, Method::pwls_ultra, Method::spultra};

class Run {
public:
    Run(const ExperimentConfig& cfg, const PipelineOptions& opts, std::ostream& log)
        : cfg_(cfg), opts_(opts), log_(log), dir_(cfg.out_dir), hash_(sha256_hex(cfg.canonical())) {}

    int execute();

private:
    void simulate();
    void learn();
    void reconstruct();
    void evaluate();

    void load_manifest();
    void record(const std::string& name);
    void write_manifest();
    fs::path path(const std::string& name) const { return dir_ / name; }
    const SystemMatrix& matrix();
    TransformUnion transforms() const;
    std::vector<Method> methods() const;
    void note(const std::string& msg) { log_ << "[" << to_string(opts_.sub) << "] " << msg << '\n'; }

    const ExperimentConfig& cfg_;
    const PipelineOptions& opts_;
    std::ostream& log_;
    fs::path dir_;
    std::string hash_;
    std::optional<SystemMatrix> A_;
    nlohmann::json artifacts_ = nlohmann::json::object();
    nlohmann::json previous_ = nlohmann::json::object();
    std::vector<std::string> mismatches_;
};

const SystemMatrix& Run::matrix() {
    if (!A_) {
        const auto t0 = std::chrono::steady_clock::now();
        A_.emplace(cfg_.geometry);
        note("system matrix: " + std::to_string(A_->nonzeros()) + " nonzeros in " +
             std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
    }
    return *A_;
}

void Run::load_manifest() {
    const fs::path p = path("manifest.json");
    if (!fs::exists(p)) return;
    std::ifstream is(p);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        note("ignoring unreadable manifest.json");
        return;
    }
    const bool same = j.value("config_hash", "") == hash_ && j.value("seed", std::uint64_t{0}) == cfg_.seed &&
                      j.value("deterministic_noise", false) == opts_.deterministic_noise;
    if (same && j.contains("artifacts") && j["artifacts"].is_object()) {
        previous_ = j["artifacts"];
        artifacts_ = previous_;
    }
}

void Run::record(const std::string& name) {
    const std::string sum = sha256_file(path(name));
    if (previous_.contains(name) && previous_[name].get<std::string>() != sum) {
        mismatches_.push_back(name);
    }
    artifacts_[name] = sum;
}

void Run::write_manifest() {
    nlohmann::json j;
    j["config_hash"] = hash_;
    j["seed"] = cfg_.seed;
    j["deterministic_noise"] = opts_.deterministic_noise;
    j["rng"] = kRngAlgorithm;
    j["artifacts"] = artifacts_;
    std::ofstream os(path("manifest.json"), std::ios::trunc);
    os << j.dump(2) << '\n';
}

std::vector<Method> Run::methods() const {
    if (opts_.method) return {*opts_.method};
    std::vector<Method> out;
    for (Method m : kAllMethods) {
        if (m == Method::fbp && cfg_.geometry.beam_kind != BeamKind::parallel) continue;
        out.push_back(m);
    }
    return out;
}

void Run::simulate() {
    const PhantomSpec spec = phantom_preset(cfg_.phantom, cfg_.geometry.image_dims, cfg_.geometry.pixel_spacing);
    const ImageGrid truth = make_phantom(spec);
    const SimOutput sim = simulate_prelog(truth, cfg_.model, matrix(), {cfg_.seed}, opts_.deterministic_noise);
    save_image(path("truth.spim"), truth);
    write_pgm(path("truth.pgm"), truth, cfg_.mu_water);
    const double step = cfg_.geometry.angular_range / static_cast<double>(cfg_.geometry.n_views);
    save_sinogram(path("counts.spim"), sim.counts, step, cfg_.geometry.detector_spacing);
    for (const char* name : {"truth.spim", "truth.pgm", "counts.spim"}) record(name);
    std::ostringstream msg;
    msg << "simulated " << sim.counts.size() << " rays, non-positive fraction " << sim.nonpositive_fraction;
    note(msg.str());
}

void Run::learn() {
    const PhantomSpec spec =
        phantom_preset(cfg_.learning.phantom, cfg_.geometry.image_dims, cfg_.geometry.pixel_spacing);
    const ImageGrid train = make_phantom(spec);
    const PatchConfig pc{cfg_.recon.patch.side, cfg_.learning.stride};
    pc.validate(train.dims);
    LearnOptions lo;
    lo.K = cfg_.learning.K;
    lo.gamma_c = cfg_.learning.gamma_c;
    lo.lambda0 = cfg_.learning.lambda0;
    lo.iters = cfg_.learning.iters;
    lo.seed = cfg_.seed;
    const LearnResult lr = learn_transforms(extract_patches(train, pc), lo);
    save_image(path("train.spim"), train);
    save_transforms(lr.transforms, path("transforms.ultr"));
    record("train.spim");
    record("transforms.ultr");
    std::ostringstream msg;
    msg << "learned " << lo.K << " transforms, objective " << lr.objective.front() << " -> "
        << lr.objective.back();
    note(msg.str());
}

TransformUnion Run::transforms() const {
    const fs::path p = cfg_.transforms ? *cfg_.transforms : path("transforms.ultr");
    if (!fs::exists(p)) {
        throw MissingArtifactError("missing transforms " + p.string() + " (run 'learn' first)");
    }
    TransformUnion u = load_transforms(p);
    if (u.v() != cfg_.learning.v) {
        throw ConfigError("transforms in " + p.string() + " have v = " + std::to_string(u.v()) +
                          " but learning.v = " + std::to_string(cfg_.learning.v));
    }
    return u;
}

void write_trace(const fs::path& p, const ConvergenceTrace& t) {
    std::ofstream os(p, std::ios::trunc);
    write_trace_csv(t, os);
}

void Run::reconstruct() {
    const fs::path counts_path = path("counts.spim");
    if (!fs::exists(counts_path)) {
        throw MissingArtifactError("missing sinogram " + counts_path.string() + " (run 'simulate' first)");
    }
    const Sinogram counts = load_sinogram(counts_path);
    const auto& g = cfg_.geometry;
    if (counts.n_views != g.n_views || counts.n_detectors != g.n_detectors) {
        throw ConfigError("counts.spim does not match the configured geometry");
    }
    std::optional<ImageGrid> truth;
    if (fs::exists(path("truth.spim"))) truth = load_image(path("truth.spim"));
    std::optional<RoiMask> roi;
    if (truth) roi = evaluation_roi(*truth, cfg_.roi);
    const TruthRef ref{truth ? &*truth : nullptr, roi ? &*roi : nullptr, cfg_.mu_water};

    const std::vector<Method> todo = methods();
    const bool want_fbp = std::find(todo.begin(), todo.end(), Method::fbp) != todo.end();
    const bool iterative = todo.size() > (want_fbp ? 1u : 0u);
    if (want_fbp && g.beam_kind != BeamKind::parallel) {
        throw ConfigError("fbp is available for parallel-beam geometry only");
    }
    std::optional<TransformUnion> u;
    for (Method m : todo) {
        if ((m == Method::pwls_ultra || m == Method::spultra) && !u) u = transforms();
    }

    const PostLogData post = post_log_convert(counts.values, cfg_.model);
    if (!post.flagged.empty()) {
        note(std::to_string(post.flagged.size()) + " rays had no real beam-hardening inverse; weight set to 0");
    }
    const SystemMatrix& A = matrix();

    auto save = [&](Method m, const ImageGrid& img, const ConvergenceTrace* trace) {
        const std::string base = "recon_" + to_string(m);
        save_image(path(base + ".spim"), img);
        write_pgm(path(base + ".pgm"), img, cfg_.mu_water);
        record(base + ".spim");
        record(base + ".pgm");
        if (trace != nullptr) write_trace(path("trace_" + to_string(m) + ".csv"), *trace);
        if (truth) {
            std::ostringstream msg;
            msg << to_string(m) << ": rmse " << rmse_roi(img, *truth, *roi, cfg_.mu_water) << " HU";
            note(msg.str());
        }
    };
    auto guarded = [&](Method m, auto&& fn) {
        ConvergenceTrace partial;
        try {
            return fn(&partial);
        } catch (const NumericalError&) {
            write_trace(path("trace_" + to_string(m) + ".csv"), partial);
            throw;
        }
    };

    ImageGrid x0(g.image_dims, g.pixel_spacing);
    if (g.beam_kind == BeamKind::parallel) {
        ImageGrid fbp = fbp_reconstruct(post.l_tilde, g);
        if (want_fbp) save(Method::fbp, fbp, nullptr);
        x0 = std::move(fbp);
        clip_to_box(x0.values, cfg_.recon.x_max);
    }
    if (!iterative) return;

    ReconResult ep = guarded(Method::pwls_ep, [&](ConvergenceTrace* p) {
        return pwls_ep_reconstruct(post.l_tilde, post.w_tilde, A, cfg_.recon, x0, ref, p);
    });
    if (std::find(todo.begin(), todo.end(), Method::pwls_ep) != todo.end()) save(Method::pwls_ep, ep.image, &ep.trace);

    for (Method m : todo) {
        if (m == Method::pwls_ultra) {
            ReconResult r = guarded(m, [&](ConvergenceTrace* p) {
                return pwls_ultra_reconstruct(post.l_tilde, post.w_tilde, *u, A, cfg_.recon, ep.image, ref, p);
            });
            save(m, r.image, &r.trace);
        } else if (m == Method::spultra) {
            ReconResult r = guarded(m, [&](ConvergenceTrace* p) {
                return spultra_reconstruct(counts.values, cfg_.model, *u, A, cfg_.recon, ep.image, ref, p);
            });
            save(m, r.image, &r.trace);
        }
    }
}

void Run::evaluate() {
    const fs::path truth_path = path("truth.spim");
    if (!fs::exists(truth_path)) {
        throw MissingArtifactError("missing truth image " + truth_path.string() + " (run 'simulate' first)");
    }
    const ImageGrid truth = load_image(truth_path);
    const RoiMask roi = evaluation_roi(truth, cfg_.roi);
    std::vector<Method> found;
    for (Method m : opts_.method ? std::vector<Method>{*opts_.method} : std::vector<Method>(std::begin(kAllMethods), std::end(kAllMethods))) {
        const fs::path p = path("recon_" + to_string(m) + ".spim");
        if (fs::exists(p)) {
            found.push_back(m);
        } else if (opts_.method) {
            throw MissingArtifactError("missing reconstruction " + p.string() + " (run 'reconstruct' first)");
        }
    }
    if (found.empty()) {
        throw MissingArtifactError("no reconstructions found in " + dir_.string() + " (run 'reconstruct' first)");
    }
    // A single-method evaluation gets its own file so the full table stays reproducible.
    const std::string name = opts_.method ? "metrics_" + to_string(*opts_.method) + ".csv" : "metrics.csv";
    std::ofstream os(path(name), std::ios::trunc);
    os << "run_id,metric,roi_label,value\n";
    os.precision(10);
    const std::string run = hash_.substr(0, 12);
    for (Method m : found) {
        const ImageGrid x = load_image(path("recon_" + to_string(m) + ".spim"));
        if (x.dims != truth.dims) {
            throw ConfigError("reconstruction and truth differ in size");
        }
        const std::string id = run + ":" + to_string(m);
        const RoiStats st = roi_stats(x, roi, cfg_.mu_water);
        os << id << ",rmse_vs_truth," << roi.label << ',' << rmse_roi(x, truth, roi, cfg_.mu_water) << '\n';
        os << id << ",ssim,full," << ssim(x, truth) << '\n';
        os << id << ",mean_hu," << roi.label << ',' << st.mean << '\n';
        os << id << ",std_hu," << roi.label << ',' << st.std << '\n';
    }
    os.close();
    record(name);
    note("wrote metrics for " + std::to_string(found.size()) + " reconstructions");
}

int Run::execute() {
    try {
        fs::create_directories(dir_);
        load_manifest();
        const Subcommand s = opts_.sub;
        if (s == Subcommand::simulate || s == Subcommand::all) simulate();
        if (s == Subcommand::learn || (s == Subcommand::all && !cfg_.transforms)) learn();
        if (s == Subcommand::reconstruct || s == Subcommand::all) reconstruct();
        if (s == Subcommand::evaluate || s == Subcommand::all) evaluate();
    } catch (const MissingArtifactError& e) {
        log_ << "error: " << e.what() << '\n';
        write_manifest();
        return exit_code::missing_artifact;
    } catch (const NumericalError& e) {
        log_ << "error: numerical abort: " << e.what() << " (partial trace written)\n";
        write_manifest();
        return exit_code::numerical;
    } catch (const std::exception& e) {
        log_ << "error: " << e.what() << '\n';
        return exit_code::config;
    }
    write_manifest();
    if (!mismatches_.empty()) {
        log_ << "error: artifacts differ from manifest.json:";
        for (const auto& m : mismatches_) log_ << ' ' << m;
        log_ << '\n';
        return exit_code::manifest_mismatch;
    }
    return exit_code::ok;
}

} // namespace

int run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opts, std::ostream& log) {
    Run run(cfg, opts, log);
    return run.execute();
}

} // namespace spultra
