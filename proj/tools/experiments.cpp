#include "experiments.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "tkz/generators.hpp"
#include "tkz/sampling.hpp"
#include "tkz/solvers.hpp"

namespace tkz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Index thread_budget() {
    if (const char* env = std::getenv("TKZ_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<Index>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<Index>(hw) : 1;
}

// runs fn(i) for i in [0, n); trials are independent and land in index
// order, so the merge downstream is deterministic regardless of schedule
template <class Fn>
void parallel_trials(Index n, Fn&& fn) {
    const Index workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const Index i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

json summarize(const std::vector<SolveTrace>& traces) {
    json j;
    if (traces.empty()) return j;
    json t_arr = json::array(), med = json::array(), q25 = json::array(), q75 = json::array();
    const std::size_t npts = traces.front().iterations.size();
    for (std::size_t p = 0; p < npts; ++p) {
        std::vector<double> vals;
        for (const auto& tr : traces)
            if (p < tr.iterations.size()) vals.push_back(tr.iterations[p].value);
        t_arr.push_back(traces.front().iterations[p].t);
        med.push_back(quantile(vals, 0.5));
        q25.push_back(quantile(vals, 0.25));
        q75.push_back(quantile(vals, 0.75));
    }
    j["t"] = t_arr;
    j["median"] = med;
    j["q25"] = q25;
    j["q75"] = q75;
    std::vector<double> finals;
    for (const auto& tr : traces) finals.push_back(tr.iterations.back().value);
    j["final_median"] = quantile(finals, 0.5);
    j["final_q25"] = quantile(finals, 0.25);
    j["final_q75"] = quantile(finals, 0.75);
    j["metric"] = traces.front().metric_is_residual ? "residual" : "relative_error";
    return j;
}

struct RunSpec {
    std::string name;
    std::function<SolveTrace(std::uint64_t seed)> run;
    Index at10_index = 1; // trace point index corresponding to t = 10
};

// executes every configuration x trial, writes traces and the summary
void execute(const std::vector<RunSpec>& specs, Index trials, std::uint64_t base_seed,
             const std::string& out_dir, json extra = {}) {
    fs::create_directories(fs::path(out_dir) / "traces");
    json summary;
    if (!extra.empty()) summary["protocol_info"] = extra;
    for (const auto& spec : specs) {
        std::vector<SolveTrace> traces(static_cast<std::size_t>(trials));
        parallel_trials(trials, [&](Index i) {
            traces[static_cast<std::size_t>(i)] = spec.run(base_seed + static_cast<std::uint64_t>(i));
        });
        for (Index i = 0; i < trials; ++i) {
            char name[160];
            std::snprintf(name, sizeof name, "%s_trial%02lld.csv", spec.name.c_str(),
                          static_cast<long long>(i));
            write_trace_csv(traces[static_cast<std::size_t>(i)],
                            (fs::path(out_dir) / "traces" / name).string());
        }
        summary[spec.name] = summarize(traces);
        std::printf("  %-52s final median %.6e\n", spec.name.c_str(),
                    summary[spec.name]["final_median"].get<double>());
        std::fflush(stdout);
    }
    std::ofstream os((fs::path(out_dir) / "summary.json").string());
    if (!os) throw IoError("cannot write summary in " + out_dir);
    os << summary.dump(2) << '\n';
}

SolverConfig make_cfg(Index iters, std::uint64_t seed, Index trace_every) {
    SolverConfig cfg;
    cfg.max_iters = iters;
    cfg.seed = seed;
    cfg.trace_every = trace_every;
    return cfg;
}

std::string size_tag(Index v) { return std::to_string(v); }

// fig1 / fig2: 40x10x7 by 10x5x7 matched pair, |mu| in {1,5,10}, |nu| = 1
void fig_pair_protocol(bool fig2, Index trials, Index iters_override, std::uint64_t base_seed,
                       Index trace_every, const std::string& out_dir) {
    const MatchedPair pair = gen_matched_pair(40, 10, 5, 5, 7, base_seed, 1e-4);
    const Index brk_iters = iters_override ? iters_override : 2000;
    const Index brek_iters = iters_override ? iters_override : 5000;
    std::vector<RunSpec> specs;
    for (Index mu : {1, 5, 10}) {
        auto add = [&](const std::string& name, const FactorizedSystem& sys_ref, bool extended,
                       Index iters) {
            const FactorizedSystem* sys = &sys_ref; // outlives the spec: member of `pair`
            specs.push_back({name, [sys, mu, extended, iters, trace_every](std::uint64_t seed) {
                                 const BlockSet bu = make_all_of_size(sys->m(), mu, sys->m1());
                                 const BlockSet bv = make_all_of_size(sys->m1(), 1, sys->n());
                                 const SolverConfig cfg = make_cfg(iters, seed, trace_every);
                                 return extended ? factbrek(*sys, bu, bv, cfg)
                                                 : factbrk(*sys, bu, bv, cfg);
                             }});
        };
        if (!fig2) {
            add("factbrk_consistent_mu" + size_tag(mu), pair.consistent, false, brk_iters);
            add("factbrk_inconsistent_mu" + size_tag(mu), pair.inconsistent, false, brk_iters);
            add("factbrek_consistent_mu" + size_tag(mu), pair.consistent, true, brek_iters);
            add("factbrek_inconsistent_mu" + size_tag(mu), pair.inconsistent, true, brek_iters);
        } else {
            add("factbrk_consistent_mu" + size_tag(mu), pair.consistent, false, brk_iters);
            add("factbrek_consistent_mu" + size_tag(mu), pair.consistent, true, brek_iters);
            add("factbrek_inconsistent_mu" + size_tag(mu), pair.inconsistent, true, brek_iters);
        }
    }
    execute(specs, trials, base_seed, out_dir,
            {{"system", "40x10x7 / 10x5x7 matched pair"}, {"eps", 1e-4}});
}

void fig3_blocks_protocol(Index trials, Index iters_override, std::uint64_t base_seed,
                          Index trace_every, const std::string& out_dir) {
    const FactorizedSystem sys = gen_consistent(40, 10, 5, 5, 7, base_seed);
    const Index iters = iters_override ? iters_override : 2000;
    std::vector<RunSpec> specs;
    for (Index mu : {1, 5, 10}) {
        for (const std::string kind : {"all", "partition", "varpartition"}) {
            specs.push_back(
                {"factbrk_" + kind + "_mu" + size_tag(mu),
                 [&sys, mu, kind, iters, trace_every](std::uint64_t seed) {
                     BlockSet bu = kind == "all"
                                       ? make_all_of_size(sys.m(), mu, sys.m1())
                                       : kind == "partition"
                                             ? make_equal_partition(sys.m(), mu, seed, sys.m1())
                                             : make_variable_partition(
                                                   sys.m(), mu, std::max<Index>(1, mu / 2), seed,
                                                   sys.m1());
                     const BlockSet bv = make_all_of_size(sys.m1(), 1, sys.n());
                     return factbrk(sys, bu, bv, make_cfg(iters, seed, trace_every));
                 }});
        }
    }
    execute(specs, trials, base_seed, out_dir,
            {{"system", "40x10x7 / 10x5x7 consistent"},
             {"partitions", "redrawn per trial from the trial seed"}});
}

void fig4_matricized_protocol(Index trials, Index iters_override, std::uint64_t base_seed,
                              Index trace_every, const std::string& out_dir) {
    const MatchedPair pair = gen_matched_pair(40, 10, 5, 5, 7, base_seed, 1e-4);
    const FactorizedSystem mat_c = matricized_equivalents(pair.consistent);
    const FactorizedSystem mat_i = matricized_equivalents(pair.inconsistent);
    const Index p = pair.consistent.p();
    const Index brk_iters = iters_override ? iters_override : 2000;
    const Index brek_iters = iters_override ? iters_override : 5000;

    std::vector<RunSpec> specs;
    for (Index mu : {1, 5, 10}) {
        specs.push_back({"factbrk_tensor_mu" + size_tag(mu),
                         [&pair, mu, brk_iters, trace_every](std::uint64_t seed) {
                             const auto& sys = pair.consistent;
                             return factbrk(sys, make_all_of_size(sys.m(), mu, sys.m1()),
                                            make_all_of_size(sys.m1(), 1, sys.n()),
                                            make_cfg(brk_iters, seed, trace_every));
                         }});
        specs.push_back({"factbrk_matricized_mu" + size_tag(mu * p),
                         [&mat_c, mu, p, brk_iters, trace_every](std::uint64_t seed) {
                             return factbrk(mat_c, make_all_of_size(mat_c.m(), mu * p, mat_c.m1()),
                                            make_all_of_size(mat_c.m1(), p, mat_c.n()),
                                            make_cfg(brk_iters, seed, trace_every));
                         }});
        specs.push_back({"factbrek_tensor_mu" + size_tag(mu),
                         [&pair, mu, brek_iters, trace_every](std::uint64_t seed) {
                             const auto& sys = pair.inconsistent;
                             return factbrek(sys, make_all_of_size(sys.m(), mu, sys.m1()),
                                             make_all_of_size(sys.m1(), 1, sys.n()),
                                             make_cfg(brek_iters, seed, trace_every));
                         }});
        specs.push_back({"factbrek_matricized_mu" + size_tag(mu * p),
                         [&mat_i, mu, p, brek_iters, trace_every](std::uint64_t seed) {
                             return factbrek(mat_i, make_all_of_size(mat_i.m(), mu * p, mat_i.m1()),
                                             make_all_of_size(mat_i.m1(), p, mat_i.n()),
                                             make_cfg(brek_iters, seed, trace_every));
                         }});
    }
    execute(specs, trials, base_seed, out_dir,
            {{"system", "40x10x7 / 10x5x7 pair and its matricized equivalent"},
             {"block_scaling", "matricized runs use p-scaled block sizes"}});
}

void table_protocol(bool divergence_only, Index trials, Index iters_override,
                    std::uint64_t base_seed, Index trace_every, const std::string& out_dir) {
    const Index iters = iters_override ? iters_override : 1000;
    std::vector<FactorizedSystem> systems;
    std::vector<RunSpec> specs;
    json info;
    for (const auto& id : experiment_case_ids()) {
        FactorizedSystem sys = gen_case(id, base_seed);
        if (divergence_only && sys.theory_holds) continue;
        systems.push_back(std::move(sys));
    }
    specs.reserve(systems.size() * 16);
    for (const auto& sys_ref : systems) {
        const FactorizedSystem* sys = &sys_ref;
        info[sys->case_id] = {{"theory_holds", sys->theory_holds},
                              {"m", sys->m()},
                              {"r", sys->m1()}};
        for (Index mu : sys->mu_menu)
            for (Index nu : sys->nu_menu)
                for (const bool extended : {false, true}) {
                    if (divergence_only && extended) continue;
                    specs.push_back(
                        {"case" + sys->case_id + (extended ? "_factbrek" : "_factbrk") + "_mu" +
                             size_tag(mu) + "_nu" + size_tag(nu),
                         [sys, mu, nu, extended, iters, trace_every](std::uint64_t seed) {
                             const BlockSet bu = make_all_of_size(sys->m(), mu, sys->m1());
                             const BlockSet bv = make_all_of_size(sys->m1(), nu, sys->n());
                             const SolverConfig cfg = make_cfg(iters, seed, trace_every);
                             return extended ? factbrek(*sys, bu, bv, cfg)
                                             : factbrk(*sys, bu, bv, cfg);
                         }});
                }
    }
    execute(specs, trials, base_seed, out_dir, info);

    if (divergence_only) {
        // post-pass: flag configurations whose median error grew after t=10
        std::ifstream is((fs::path(out_dir) / "summary.json").string());
        json summary;
        is >> summary;
        is.close();
        json flags;
        for (auto& [name, entry] : summary.items()) {
            if (!entry.contains("t")) continue;
            const auto& ts = entry["t"];
            const auto& med = entry["median"];
            double at10 = -1.0;
            for (std::size_t i = 0; i < ts.size(); ++i)
                if (ts[i].get<Index>() == 10) at10 = med[i].get<double>();
            if (at10 >= 0.0)
                flags[name] = {{"median_at_10", at10},
                               {"median_final", entry["final_median"]},
                               {"nonconvergent", entry["final_median"].get<double>() > at10}};
        }
        summary["divergence_flags"] = flags;
        std::ofstream os((fs::path(out_dir) / "summary.json").string());
        os << summary.dump(2) << '\n';
    }
}

} // namespace

void run_experiment(const std::string& protocol, Index trials, Index iters_override,
                    std::uint64_t base_seed, Index trace_every, const std::string& out_dir) {
    if (trials < 1) throw ConfigError("trials must be at least 1");
    std::printf("protocol %s (%lld trials) -> %s\n", protocol.c_str(),
                static_cast<long long>(trials), out_dir.c_str());
    if (protocol == "fig1")
        fig_pair_protocol(false, trials, iters_override, base_seed, trace_every, out_dir);
    else if (protocol == "fig2")
        fig_pair_protocol(true, trials, iters_override, base_seed, trace_every, out_dir);
    else if (protocol == "fig3-blocks")
        fig3_blocks_protocol(trials, iters_override, base_seed, trace_every, out_dir);
    else if (protocol == "fig4-matricized")
        fig4_matricized_protocol(trials, iters_override, base_seed, trace_every, out_dir);
    else if (protocol == "table1")
        table_protocol(false, trials, iters_override, base_seed, trace_every, out_dir);
    else if (protocol == "appendix-divergence")
        table_protocol(true, trials, iters_override, base_seed, trace_every, out_dir);
    else
        throw ConfigError("unknown protocol '" + protocol +
                          "' (fig1|fig2|fig3-blocks|fig4-matricized|table1|appendix-divergence)");
}

} // namespace tkz::cli
