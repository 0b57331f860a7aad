// tkz: t-product tensor Kaczmarz solvers, system generators, convergence
// bounds and circulant deblurring, driven from one binary.
//
// Exit codes: 0 success, 2 configuration error, 3 assumption violation,
// 1 anything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "experiments.hpp"
#include "tkz/deblur.hpp"
#include "tkz/generators.hpp"
#include "tkz/sampling.hpp"
#include "tkz/solvers.hpp"
#include "tkz/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tkz;

namespace {

struct BlockOpts {
    std::string family = "all"; // all | partition | varpartition | singletons
    Index size = 1;
    Index spread = 0;
    std::string dist = "uniform"; // uniform | sigma
    std::uint64_t seed = 0;
};

void add_block_flags(CLI::App* cmd, BlockOpts& mu, BlockOpts& nu) {
    cmd->add_option("--mu-family", mu.family, "outer block family")
        ->check(CLI::IsMember({"all", "partition", "varpartition", "singletons"}));
    cmd->add_option("--mu-size", mu.size, "outer block size |mu| (mean for varpartition)");
    cmd->add_option("--mu-spread", mu.spread, "size band for varpartition");
    cmd->add_option("--mu-dist", mu.dist, "outer sampling distribution")
        ->check(CLI::IsMember({"uniform", "sigma"}));
    cmd->add_option("--nu-family", nu.family, "inner block family")
        ->check(CLI::IsMember({"all", "partition", "varpartition", "singletons"}));
    cmd->add_option("--nu-size", nu.size, "inner block size |nu|");
    cmd->add_option("--nu-spread", nu.spread, "size band for varpartition");
    cmd->add_option("--nu-dist", nu.dist, "inner sampling distribution")
        ->check(CLI::IsMember({"uniform", "sigma"}));
}

BlockSet build_blocks(const BlockOpts& o, const Tensor3& host, Index enum_limit = 10'000) {
    const Index m = host.rows();
    const std::optional<Index> width = host.cols();
    BlockSet bs = [&] {
        if (o.family == "all") return make_all_of_size(m, o.size, width);
        if (o.family == "singletons") return make_singletons(m);
        if (o.family == "partition") return make_equal_partition(m, o.size, o.seed, width);
        return make_variable_partition(m, o.size,
                                       o.spread ? o.spread : std::max<Index>(1, o.size / 2),
                                       o.seed, width);
    }();
    if (o.dist == "sigma") bs.set_sigma_weights(sigma_min_plus_sq_weights(bs, host, enum_limit));
    return bs;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << text;
}

// resolved option snapshot; rerunning `tkz <cmd> --config run_config.ini`
// reproduces the outputs
void emit_run_config(const CLI::App& app, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "run_config.ini").string(), app.config_to_str(false, true));
}

BlurKernel parse_kernel(const std::string& spec) {
    // gaussian:SIZE:SIGMA | averaging:SIZE | delta
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.empty()) throw ConfigError("empty kernel spec");
    if (parts[0] == "delta") return BlurKernel::delta();
    if (parts[0] == "gaussian") {
        const Index size = parts.size() > 1 ? std::stoll(parts[1]) : 5;
        const double sigma = parts.size() > 2 ? std::stod(parts[2]) : 1.0;
        return BlurKernel::gaussian(size, sigma);
    }
    if (parts[0] == "averaging")
        return BlurKernel::averaging(parts.size() > 1 ? std::stoll(parts[1]) : 5);
    throw ConfigError("unknown kernel kind '" + parts[0] + "' (gaussian|averaging|delta)");
}

Tensor3 demo_frames(Index hw, Index count) {
    return Tensor3::from_generator(hw, hw, count, [&](Index i, Index j, Index f) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(hw);
        const double b = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(hw);
        const double phase = 0.7 * static_cast<double>(f);
        return 0.5 + 0.25 * std::sin(a + phase) * std::cos(b) +
               0.15 * std::cos(a - b + 0.3 * phase);
    });
}

json spectrum_to_json(const SpectrumSummary& s) {
    return {{"sigma_max", s.sigma_max},
            {"sigma_min_plus", s.sigma_min_plus},
            {"sigma_min", s.sigma_min},
            {"rank", s.rank}};
}

json constants_to_json(const ConvergenceConstants& k) {
    return {{"alpha_U", k.alpha_U},
            {"alpha_V", k.alpha_V},
            {"beta_U", k.beta_U},
            {"alpha_max", k.alpha_max},
            {"alpha_min", k.alpha_min},
            {"phi_max", k.phi_max},
            {"phi_min", k.phi_min},
            {"theta_U", k.theta_U},
            {"theta_V", k.theta_V},
            {"sigma_max_bcirc_U", k.sigma_max_bcirc_U},
            {"sigma_max_bcirc_V", k.sigma_max_bcirc_V},
            {"enumeration_exact", k.enumeration_exact},
            {"degenerate_rates", k.degenerate_rates},
            {"outer_unique_minimizer", k.outer_unique_minimizer}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"t-product tensor Kaczmarz toolkit"};
    app.set_config("--config", "", "load options from a key/value config file");
    app.require_subcommand(1);

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a synthetic factorized system");
    gen->configurable();
    Index g_m = 40, g_m1 = 10, g_n = 5, g_l = 5, g_p = 7;
    std::uint64_t g_seed = 0;
    double g_eps = 1e-4;
    bool g_consistent = false;
    std::string g_case, g_out = "system";
    gen->add_option("--m", g_m, "rows of U");
    gen->add_option("--m1", g_m1, "inner dimension");
    gen->add_option("--n", g_n, "columns of V");
    gen->add_option("--l", g_l, "columns of Y");
    gen->add_option("--p", g_p, "tensor depth");
    gen->add_option("--seed", g_seed, "generator seed");
    gen->add_option("--eps", g_eps, "relative inconsistency scale");
    gen->add_flag("--consistent", g_consistent, "generate the consistent system (eps = 0)");
    gen->add_option("--case", g_case, "experiment-table case id (1a,1b,1c,2a,2b,2c)");
    gen->add_option("--out", g_out, "output directory");

    // ---- solve ----
    auto* solve = app.add_subcommand("solve", "run a solver on a stored system");
    solve->configurable();
    std::string s_system, s_alg = "factbrk", s_trace_out, s_json_out;
    BlockOpts s_mu, s_nu;
    Index s_iters = 1000, s_trace_every = 1;
    std::uint64_t s_seed = 0;
    double s_stop_tol = 0.0;
    bool s_matricized = false;
    solve->add_option("--system", s_system, "system directory")->required();
    solve->add_option("--alg", s_alg, "trk|tbrk|tbrek|factbrk|factbrek")
        ->check(CLI::IsMember({"trk", "tbrk", "tbrek", "factbrk", "factbrek"}));
    add_block_flags(solve, s_mu, s_nu);
    solve->add_option("--iters", s_iters, "iteration budget");
    solve->add_option("--seed", s_seed, "sampling seed");
    solve->add_option("--trace-every", s_trace_every, "trace stride");
    solve->add_option("--stop-tol", s_stop_tol, "early-stop tolerance on the trace metric");
    solve->add_flag("--matricized", s_matricized,
                    "solve the equivalent matricized system with p-scaled blocks");
    solve->add_option("--trace-out", s_trace_out, "trace CSV path");
    solve->add_option("--json-out", s_json_out, "trace JSON path");

    // ---- constants ----
    auto* consts = app.add_subcommand("constants", "convergence constants of a stored system");
    consts->configurable();
    std::string c_system, c_out = "constants.json";
    BlockOpts c_mu, c_nu;
    Index c_mc = 0;
    consts->add_option("--system", c_system, "system directory")->required();
    add_block_flags(consts, c_mu, c_nu);
    consts->add_option("--monte-carlo", c_mc, "sample count for oversized families");
    consts->add_option("--out", c_out, "output JSON path");

    // ---- bounds ----
    auto* bounds = app.add_subcommand("bounds", "theorem bound curves for a stored system");
    bounds->configurable();
    std::string b_system, b_out = "bounds.json", b_which = "factbrk";
    BlockOpts b_mu, b_nu;
    std::vector<Index> b_tgrid = {1, 5, 10, 20};
    Index b_mc = 0;
    bounds->add_option("--system", b_system, "system directory")->required();
    add_block_flags(bounds, b_mu, b_nu);
    bounds->add_option("--which", b_which, "factbrk|factbrek|tbrek")
        ->check(CLI::IsMember({"factbrk", "factbrek", "tbrek"}));
    bounds->add_option("--t-grid", b_tgrid, "iterations to evaluate")->delimiter(',');
    bounds->add_option("--monte-carlo", b_mc, "sample count for oversized families");
    bounds->add_option("--out", b_out, "output JSON path");
    std::string b_csv;
    bounds->add_option("--csv-out", b_csv, "also write the curve as t,bound CSV");

    // ---- experiment ----
    auto* exp = app.add_subcommand("experiment", "run a named experiment protocol");
    exp->configurable();
    std::string e_protocol, e_out = "experiment";
    Index e_trials = 5, e_iters = 0, e_trace_every = 10;
    std::uint64_t e_seed = 0;
    exp->add_option("--protocol", e_protocol,
                    "fig1|fig2|fig3-blocks|fig4-matricized|table1|appendix-divergence")
        ->required();
    exp->add_option("--trials", e_trials, "independent runs per configuration");
    exp->add_option("--iters", e_iters, "override the protocol's iteration budget");
    exp->add_option("--seed", e_seed, "base seed (trial i uses seed + i)");
    exp->add_option("--trace-every", e_trace_every, "trace stride");
    exp->add_option("--out", e_out, "output directory");

    // ---- deblur ----
    auto* deb = app.add_subcommand("deblur", "recover twice-blurred video frames");
    deb->configurable();
    std::string d_frames, d_out = "deblur_out", d_k1 = "gaussian:5:1.0", d_k2 = "averaging:5";
    std::string d_alg = "factbrk";
    Index d_demo = 0, d_demo_frames = 4, d_mu = 1, d_nu = 1, d_iters = 20000, d_trace_every = 100;
    std::uint64_t d_seed = 1;
    bool d_blur_input = false;
    deb->add_option("--frames", d_frames, "directory of PGM frames (the blurred video)");
    std::string d_video;
    deb->add_option("--video", d_video, "T3D1 tensor of frames (height x width x count)");
    deb->add_option("--demo", d_demo,
                    "generate synthetic frames of this size instead of reading any "
                    "(128 with --demo-frames 12 reproduces the full-size run)");
    deb->add_option("--demo-frames", d_demo_frames, "frame count for --demo");
    deb->add_flag("--blur-input", d_blur_input,
                  "treat the input frames as clean and blur them first");
    deb->add_option("--kernel1", d_k1, "first blur kernel, e.g. gaussian:5:1.0");
    deb->add_option("--kernel2", d_k2, "second blur kernel, e.g. averaging:5");
    deb->add_option("--alg", d_alg, "factbrk|factbrek")
        ->check(CLI::IsMember({"factbrk", "factbrek"}));
    deb->add_option("--mu-size", d_mu, "outer block size");
    deb->add_option("--nu-size", d_nu, "inner block size");
    deb->add_option("--iters", d_iters, "iteration budget");
    deb->add_option("--seed", d_seed, "sampling seed");
    deb->add_option("--trace-every", d_trace_every, "trace stride");
    deb->add_option("--out", d_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) {
            if (g_case.empty() &&
                (gen->count("--m") == 0 || gen->count("--m1") == 0 || gen->count("--n") == 0 ||
                 gen->count("--l") == 0 || gen->count("--p") == 0))
                throw ConfigError(
                    "gen needs either --case ID or all of --m --m1 --n --l --p (see --help)");
            FactorizedSystem sys =
                !g_case.empty()
                    ? gen_case(g_case, g_seed)
                    : (g_consistent ? gen_consistent(g_m, g_m1, g_n, g_l, g_p, g_seed)
                                    : gen_inconsistent(g_m, g_m1, g_n, g_l, g_p, g_seed, g_eps));
            save_system(sys, g_out);
            emit_run_config(app, g_out);
            std::printf("system %lldx%lldx%lld depth %lld -> %s (eps %g, outer %s, inner %s)\n",
                        static_cast<long long>(sys.m()), static_cast<long long>(sys.m1()),
                        static_cast<long long>(sys.n()), static_cast<long long>(sys.p()),
                        g_out.c_str(), sys.eps,
                        sys.outer_consistent ? "consistent" : "inconsistent",
                        sys.inner_consistent ? "consistent" : "inconsistent");
            return 0;
        }

        if (*solve) {
            FactorizedSystem sys = load_system(s_system);
            BlockOpts mu = s_mu, nu = s_nu;
            if (s_matricized) {
                const Index p = sys.p();
                sys = matricized_equivalents(sys);
                mu.size *= p;
                nu.size *= p;
            }
            mu.seed = nu.seed = s_seed;
            SolverConfig cfg;
            cfg.max_iters = s_iters;
            cfg.seed = s_seed;
            cfg.trace_every = s_trace_every;
            if (s_stop_tol > 0.0) cfg.stop_tol = s_stop_tol;

            SolveTrace tr;
            if (s_alg == "factbrk" || s_alg == "factbrek") {
                const BlockSet bu = build_blocks(mu, sys.U);
                const BlockSet bv = build_blocks(nu, sys.V);
                tr = s_alg == "factbrk" ? factbrk(sys, bu, bv, cfg)
                                        : factbrek(sys, bu, bv, cfg);
            } else {
                // single-factor algorithms act on the outer system U Z = Y
                cfg.reference = sys.Z_dag;
                if (s_alg == "trk") {
                    tr = trk(sys.U, sys.Y, cfg);
                } else {
                    const BlockSet bu = build_blocks(mu, sys.U);
                    tr = s_alg == "tbrk" ? tbrk(sys.U, sys.Y, bu, cfg)
                                         : tbrek(sys.U, sys.Y, bu, cfg);
                }
            }
            if (!s_trace_out.empty()) {
                write_trace_csv(tr, s_trace_out);
                const fs::path parent = fs::path(s_trace_out).parent_path();
                write_text(((parent.empty() ? fs::path(".") : parent) / "run_config.ini").string(),
                           app.config_to_str(false, true));
            }
            if (!s_json_out.empty())
                write_trace_json(tr, s_alg, s_seed,
                                 mu.family + "(k=" + std::to_string(mu.size) + ")/" + nu.family +
                                     "(k=" + std::to_string(nu.size) + ")",
                                 s_json_out);
            std::printf("%s: %lld iterations, final %s %.6e, residual %.6e, skipped %lld\n",
                        s_alg.c_str(), static_cast<long long>(tr.iterations_run),
                        tr.metric_is_residual ? "residual" : "relative error",
                        tr.iterations.back().value, tr.residual_final,
                        static_cast<long long>(tr.skipped_steps));
            return 0;
        }

        if (*consts) {
            const FactorizedSystem sys = load_system(c_system);
            ExpectationOptions opts;
            if (c_mc > 0) {
                opts.monte_carlo_samples = c_mc;
                opts.monte_carlo_seed = sys.seed;
            }
            const BlockSet bu = build_blocks(c_mu, sys.U, opts.enumeration_limit);
            const BlockSet bv = build_blocks(c_nu, sys.V, opts.enumeration_limit);
            const ConvergenceConstants k = compute_constants(sys.U, sys.V, bu, bv, {}, opts);
            json j = constants_to_json(k);
            j["blocks_U"] = bu.describe();
            j["blocks_V"] = bv.describe();
            j["spectrum_U"] = spectrum_to_json(spectrum(sys.U));
            j["spectrum_V"] = spectrum_to_json(spectrum(sys.V));
            write_text(c_out, j.dump(2) + "\n");
            std::printf("constants -> %s (alpha_U %.6f, alpha_V %.6f, exact %s)\n", c_out.c_str(),
                        k.alpha_U, k.alpha_V, k.enumeration_exact ? "yes" : "no");
            return 0;
        }

        if (*bounds) {
            const FactorizedSystem sys = load_system(b_system);
            ExpectationOptions opts;
            if (b_mc > 0) {
                opts.monte_carlo_samples = b_mc;
                opts.monte_carlo_seed = sys.seed;
            }
            const BlockSet bu = build_blocks(b_mu, sys.U, opts.enumeration_limit);
            const BlockSet bv = build_blocks(b_nu, sys.V, opts.enumeration_limit);
            const ConvergenceConstants k = compute_constants(sys.U, sys.V, bu, bv, {}, opts);
            if (!sys.Z_dag || !sys.X_dag)
                throw ConfigError("stored system carries no reference solutions");
            const double nx = b_which == "tbrek" ? fro_norm(*sys.Z_dag) : fro_norm(*sys.X_dag);
            json j;
            j["constants"] = constants_to_json(k);
            j["which"] = b_which;
            j["reference_norm"] = nx;
            json curve = json::array();
            for (Index t : b_tgrid) {
                const double v = b_which == "factbrk"    ? bound_factbrk(t, k, nx)
                                 : b_which == "factbrek" ? bound_factbrek(t, k, nx)
                                                         : bound_tbrek(t, k, nx);
                curve.push_back({{"t", t}, {"bound", v}});
            }
            j["curve"] = curve;
            write_text(b_out, j.dump(2) + "\n");
            if (!b_csv.empty()) {
                std::string csv = "t,bound\n";
                char line[64];
                for (const auto& pt : curve) {
                    std::snprintf(line, sizeof line, "%lld,%.17g\n",
                                  static_cast<long long>(pt["t"].get<Index>()),
                                  pt["bound"].get<double>());
                    csv += line;
                }
                write_text(b_csv, csv);
            }
            std::printf("bounds (%s) -> %s\n", b_which.c_str(), b_out.c_str());
            return 0;
        }

        if (*exp) {
            emit_run_config(app, e_out);
            cli::run_experiment(e_protocol, e_trials, e_iters, e_seed, e_trace_every, e_out);
            return 0;
        }

        if (*deb) {
            const BlurKernel k1 = parse_kernel(d_k1);
            const BlurKernel k2 = parse_kernel(d_k2);
            if (d_demo == 0 && d_frames.empty() && d_video.empty())
                throw ConfigError("need --frames DIR, --video FILE.t3d, or --demo SIZE");
            Tensor3 input = d_demo > 0    ? demo_frames(d_demo, d_demo_frames)
                            : !d_video.empty() ? read_t3d(d_video)
                                               : frames_from_pgm_dir(d_frames);
            const bool have_clean = d_demo > 0 || d_blur_input;
            Tensor3 clean = input;
            if (have_clean) input = blur_frames(blur_frames(input, k2), k1);
            const VideoTensor blurred = VideoTensor::from_frames(input);

            SolverConfig cfg;
            cfg.max_iters = d_iters;
            cfg.seed = d_seed;
            cfg.trace_every = d_trace_every;
            const DeblurResult res = deblur_factorized(
                blurred, k1, k2, d_alg == "factbrk" ? DeblurAlg::FacTBRK : DeblurAlg::FacTBREK,
                d_mu, d_nu, cfg);

            emit_run_config(app, d_out);
            write_frames_pgm(res.frames, (fs::path(d_out) / "recovered").string(), "frame");
            write_frames_pgm(blurred.frames, (fs::path(d_out) / "blurred").string(), "frame");
            write_trace_csv(res.trace, (fs::path(d_out) / "trace.csv").string());

            json j;
            j["kernel1"] = d_k1;
            j["kernel2"] = d_k2;
            j["algorithm"] = d_alg;
            j["seed"] = d_seed;
            j["iterations_run"] = res.trace.iterations_run;
            j["residual_final"] = res.trace.residual_final;
            if (have_clean) {
                double max_err = 0.0;
                for (std::size_t i = 0; i < clean.data().size(); ++i)
                    max_err =
                        std::max(max_err, std::abs(res.frames.data()[i] - clean.data()[i]));
                j["max_pixel_error"] = max_err;
                write_frames_pgm(clean, (fs::path(d_out) / "clean").string(), "frame");
            }
            write_text((fs::path(d_out) / "summary.json").string(), j.dump(2) + "\n");
            std::printf("deblur: residual %.6e after %lld iterations -> %s\n",
                        res.trace.residual_final,
                        static_cast<long long>(res.trace.iterations_run), d_out.c_str());
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IndexError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const AssumptionViolation& e) {
        std::cerr << "assumption violation: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
