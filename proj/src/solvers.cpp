#include "tkz/solvers.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace tkz {

namespace {

using Eigen::MatrixXcd;

// Non-redundant half of a conjugate-symmetric spectrum. All solver state
// lives here: updates touch frequencies 0..p/2 only and the mirrored half is
// reconstructed on exit, so iterates stay exactly conjugate-symmetric.
struct HalfSpec {
    Index rows = 0, cols = 0, p = 0;
    std::vector<MatrixXcd> f; // frequencies 0..p/2

    static HalfSpec from(const SpectralTensor& s) {
        HalfSpec h;
        h.rows = s.rows();
        h.cols = s.cols();
        h.p = s.depth();
        const Index half = h.p / 2;
        h.f.reserve(static_cast<std::size_t>(half + 1));
        for (Index k = 0; k <= half; ++k) h.f.push_back(s.frequency(k));
        return h;
    }

    static HalfSpec from(const Tensor3& t) { return from(to_spectral(t)); }

    static HalfSpec zero(Index rows, Index cols, Index p) {
        HalfSpec h;
        h.rows = rows;
        h.cols = cols;
        h.p = p;
        h.f.assign(static_cast<std::size_t>(p / 2 + 1), MatrixXcd::Zero(rows, cols));
        return h;
    }

    double mult(Index k) const { return (k == 0 || 2 * k == p) ? 1.0 : 2.0; }
    Index half() const { return p / 2; }

    SpectralTensor expand() const {
        std::vector<MatrixXcd> full(static_cast<std::size_t>(p));
        for (Index k = 0; k <= half(); ++k)
            full[static_cast<std::size_t>(k)] = f[static_cast<std::size_t>(k)];
        for (Index k = half() + 1; k < p; ++k)
            full[static_cast<std::size_t>(k)] = f[static_cast<std::size_t>(p - k)].conjugate();
        return SpectralTensor(rows, cols, std::move(full));
    }

    Tensor3 to_tensor() const { return from_spectral(expand()); }

    double tensor_norm() const {
        double s = 0.0;
        for (Index k = 0; k <= half(); ++k)
            s += mult(k) * f[static_cast<std::size_t>(k)].squaredNorm();
        return std::sqrt(s / static_cast<double>(p));
    }
};

double norm_diff(const HalfSpec& a, const HalfSpec& b) {
    double s = 0.0;
    for (Index k = 0; k <= a.half(); ++k)
        s += a.mult(k) *
             (a.f[static_cast<std::size_t>(k)] - b.f[static_cast<std::size_t>(k)]).squaredNorm();
    return std::sqrt(s / static_cast<double>(a.p));
}

// |M * X - B|_F via the spectrum.
double residual_norm(const HalfSpec& m, const HalfSpec& x, const HalfSpec& b) {
    double s = 0.0;
    for (Index k = 0; k <= m.half(); ++k) {
        const auto ki = static_cast<std::size_t>(k);
        s += m.mult(k) * (m.f[ki] * x.f[ki] - b.f[ki]).squaredNorm();
    }
    return std::sqrt(s / static_cast<double>(m.p));
}

std::vector<int> to_int_rows(const std::vector<Index>& rows) {
    return {rows.begin(), rows.end()};
}

// One block Kaczmarz projection: X -= M_mu^* (M_mu M_mu^*)^-1 (M_mu X - B_mu).
// `w` adds the extended solvers' W_mu term to the measurement residual.
//
// A structurally zero block throws; a block whose gram conditioning falls
// below threshold is skipped (returns false) instead, which restricts the
// draw to the subfamily actually satisfying the invertibility assumption
// without aborting long runs on a one-in-20000 degenerate draw.
bool block_row_step(HalfSpec& x, const HalfSpec& m, const HalfSpec& b,
                    const std::vector<Index>& mu, const HalfSpec* w = nullptr) {
    const auto rows = to_int_rows(mu);
    const Index bsize = static_cast<Index>(rows.size());
    const Index h = m.half();

    if (bsize == 1) {
        // scalar gram fast path
        const int r = rows[0];
        std::vector<double> g(static_cast<std::size_t>(h + 1));
        double gmax = 0.0;
        for (Index k = 0; k <= h; ++k) {
            g[static_cast<std::size_t>(k)] = m.f[static_cast<std::size_t>(k)].row(r).squaredNorm();
            gmax = std::max(gmax, g[static_cast<std::size_t>(k)]);
        }
        if (gmax <= 1e-300)
            throw AssumptionViolation("zero row slice: gram not invertible");
        for (Index k = 0; k <= h; ++k)
            if (g[static_cast<std::size_t>(k)] < kGramConditionThreshold * gmax) return false;
        for (Index k = 0; k <= h; ++k) {
            const auto ki = static_cast<std::size_t>(k);
            Eigen::RowVectorXcd res = m.f[ki].row(r) * x.f[ki] - b.f[ki].row(r);
            if (w) res += w->f[ki].row(r);
            x.f[ki].noalias() -= m.f[ki].row(r).adjoint() * (res / g[ki]);
        }
        return true;
    }

    std::vector<MatrixXcd> a(static_cast<std::size_t>(h + 1));
    std::vector<Eigen::SelfAdjointEigenSolver<MatrixXcd>> eig;
    eig.reserve(static_cast<std::size_t>(h + 1));
    double lmax = 0.0;
    for (Index k = 0; k <= h; ++k) {
        const auto ki = static_cast<std::size_t>(k);
        a[ki] = m.f[ki](rows, Eigen::all);
        eig.emplace_back(MatrixXcd(a[ki] * a[ki].adjoint()));
        if (eig.back().info() != Eigen::Success)
            throw InternalError("gram eigendecomposition failed at frequency " + std::to_string(k));
        lmax = std::max(lmax, eig.back().eigenvalues().maxCoeff());
    }
    if (lmax <= 1e-300) throw AssumptionViolation("zero block slice: gram not invertible");
    for (Index k = 0; k <= h; ++k)
        if (eig[static_cast<std::size_t>(k)].eigenvalues().minCoeff() <
            kGramConditionThreshold * lmax)
            return false;
    for (Index k = 0; k <= h; ++k) {
        const auto ki = static_cast<std::size_t>(k);
        MatrixXcd res = a[ki] * x.f[ki] - b.f[ki](rows, Eigen::all);
        if (w) res += w->f[ki](rows, Eigen::all);
        const MatrixXcd s = eig[ki].eigenvectors() *
                            eig[ki].eigenvalues().cwiseInverse().asDiagonal() *
                            (eig[ki].eigenvectors().adjoint() * res);
        x.f[ki].noalias() -= a[ki].adjoint() * s;
    }
    return true;
}

// Extended solvers' column action: W -= U_:l (U_:l^* U_:l)^-1 U_:l^* W.
// Same degeneracy policy as the row step.
bool column_step(HalfSpec& w, const HalfSpec& u, Index col) {
    const Index h = u.half();
    std::vector<double> g(static_cast<std::size_t>(h + 1));
    double gmax = 0.0;
    for (Index k = 0; k <= h; ++k) {
        g[static_cast<std::size_t>(k)] = u.f[static_cast<std::size_t>(k)].col(col).squaredNorm();
        gmax = std::max(gmax, g[static_cast<std::size_t>(k)]);
    }
    if (gmax <= 1e-300)
        throw AssumptionViolation("zero column slice: gram not invertible");
    for (Index k = 0; k <= h; ++k)
        if (g[static_cast<std::size_t>(k)] < kGramConditionThreshold * gmax) return false;
    for (Index k = 0; k <= h; ++k) {
        const auto ki = static_cast<std::size_t>(k);
        w.f[ki].noalias() -= u.f[ki].col(col) * ((u.f[ki].col(col).adjoint() * w.f[ki]) / g[ki]);
    }
    return true;
}

// Stream tags keep the mu sequence identical across solvers so the
// specialization identities (tbrk == trk on singletons, factbrk == tbrk when
// V = I) hold draw for draw.
constexpr std::uint64_t kMuStream = 0, kNuStream = 1, kColStream = 2;

struct ColumnSampler {
    Index m1;
    std::vector<double> weights; // empty = uniform
    SamplerState rng;

    ColumnSampler(Index m1_, const std::vector<double>& w, std::uint64_t seed)
        : m1(m1_), weights(w), rng(seed, kColStream) {
        if (!weights.empty() && static_cast<Index>(weights.size()) != m1)
            throw ConfigError("need one column weight per column");
        for (double x : weights)
            if (!(x > 0.0)) throw ConfigError("column weights must be positive");
    }

    Index next() {
        if (weights.empty())
            return static_cast<Index>(rng.uniform_below(static_cast<std::uint64_t>(m1)));
        double total = 0.0;
        for (double x : weights) total += x;
        const double u = rng.uniform01() * total;
        double cum = 0.0;
        for (Index i = 0; i < m1; ++i) {
            cum += weights[static_cast<std::size_t>(i)];
            if (u < cum) return i;
        }
        return m1 - 1;
    }
};

class BlockDraw {
public:
    BlockDraw(const BlockSet& bs, std::uint64_t seed, std::uint64_t stream, bool cyclic)
        : bs_(bs), rng_(seed, stream) {
        if (cyclic) members_ = enumerate_family(bs).members;
    }
    std::vector<Index> next() {
        if (members_.empty()) return bs_.sample(rng_);
        auto b = members_[pos_];
        pos_ = (pos_ + 1) % members_.size();
        return b;
    }

private:
    const BlockSet& bs_;
    SamplerState rng_;
    std::vector<std::vector<Index>> members_; // cyclic debug only
    std::size_t pos_ = 0;
};

struct Metric {
    std::optional<HalfSpec> ref;
    double ref_norm = 0.0;
    bool residual = false;

    const HalfSpec* sys_m = nullptr;
    const HalfSpec* sys_b = nullptr;
    double b_norm = 1.0;

    double eval(const HalfSpec& x) const {
        if (!residual) return norm_diff(x, *ref) / ref_norm;
        return residual_norm(*sys_m, x, *sys_b) / b_norm;
    }
};

struct TraceRecorder {
    const SolverConfig& cfg;
    SolveTrace& out;
    bool done = false;

    bool should_trace(Index t) const {
        return t % cfg.trace_every == 0 || t == cfg.max_iters;
    }
    void record(Index t, double v) {
        out.iterations.push_back({t, v});
        if (cfg.stop_tol && v <= *cfg.stop_tol) done = true;
    }
};

void validate_blocks_for(const BlockSet& bs, const Tensor3& host, const char* what) {
    if (bs.host_rows() != host.rows())
        throw ShapeError(std::string(what) + ": block set over " + std::to_string(bs.host_rows()) +
                         " rows does not match tensor with " + std::to_string(host.rows()));
    if (bs.largest_block() > host.cols())
        throw AssumptionViolation(std::string(what) + ": blocks of size " +
                                  std::to_string(bs.largest_block()) +
                                  " are not wide for width " + std::to_string(host.cols()));
}

void validate_config(const SolverConfig& cfg) {
    if (cfg.max_iters < 1) throw ConfigError("max_iters must be at least 1");
    if (cfg.trace_every < 1) throw ConfigError("trace_every must be at least 1");
}

Metric make_metric(const SolverConfig& cfg, const std::optional<Tensor3>& cached_ref,
                   const HalfSpec& m, const HalfSpec& b, double b_norm, SolveTrace& trace) {
    Metric metric;
    const std::optional<Tensor3>& ref = cfg.reference ? cfg.reference : cached_ref;
    if (ref) {
        metric.ref = HalfSpec::from(*ref);
        metric.ref_norm = metric.ref->tensor_norm();
        if (metric.ref_norm <= 0.0) throw ConfigError("reference solution has zero norm");
    } else {
        metric.residual = true;
        metric.sys_m = &m;
        metric.sys_b = &b;
        metric.b_norm = b_norm;
        trace.metric_is_residual = true;
    }
    return metric;
}

} // namespace

SolveTrace tbrk(const Tensor3& u, const Tensor3& y, const BlockSet& blocks,
                const SolverConfig& cfg) {
    validate_config(cfg);
    validate_blocks_for(blocks, u, "tbrk");
    if (y.rows() != u.rows() || y.depth() != u.depth()) throw ShapeError("tbrk: Y shape mismatch");

    const HalfSpec uh = HalfSpec::from(u);
    const HalfSpec yh = HalfSpec::from(y);
    HalfSpec x = cfg.x0 ? HalfSpec::from(*cfg.x0)
                        : HalfSpec::zero(u.cols(), y.cols(), u.depth());
    if (x.rows != u.cols() || x.cols != y.cols() || x.p != u.depth())
        throw ShapeError("x0 shape does not match the system");

    SolveTrace trace;
    Metric metric =
        make_metric(cfg, std::nullopt, uh, yh, std::max(yh.tensor_norm(), 1e-300), trace);
    TraceRecorder rec{cfg, trace};
    BlockDraw draw(blocks, cfg.seed, kMuStream, cfg.cyclic_debug);

    rec.record(0, metric.eval(x));
    Index t = 0;
    while (t < cfg.max_iters && !rec.done) {
        ++t;
        if (!block_row_step(x, uh, yh, draw.next())) ++trace.skipped_steps;
        if (rec.should_trace(t)) rec.record(t, metric.eval(x));
    }
    trace.iterations_run = t;
    trace.final_iterate = x.to_tensor();
    trace.residual_final = residual_norm(uh, x, yh) / std::max(yh.tensor_norm(), 1e-300);
    return trace;
}

SolveTrace trk(const Tensor3& a, const Tensor3& b, const SolverConfig& cfg) {
    // single-row sampling is the k = 1 all-subsets family, draw for draw
    return tbrk(a, b, make_all_of_size(a.rows(), 1), cfg);
}

SolveTrace tbrek(const Tensor3& u, const Tensor3& y, const BlockSet& blocks,
                 const SolverConfig& cfg, const std::optional<Tensor3>& w_reference) {
    validate_config(cfg);
    validate_blocks_for(blocks, u, "tbrek");
    if (y.rows() != u.rows() || y.depth() != u.depth()) throw ShapeError("tbrek: Y shape mismatch");

    const HalfSpec uh = HalfSpec::from(u);
    const HalfSpec yh = HalfSpec::from(y);
    HalfSpec x = cfg.x0 ? HalfSpec::from(*cfg.x0)
                        : HalfSpec::zero(u.cols(), y.cols(), u.depth());
    if (x.rows != u.cols() || x.cols != y.cols() || x.p != u.depth())
        throw ShapeError("x0 shape does not match the system");
    HalfSpec w = yh; // W starts at the measurements

    std::optional<HalfSpec> wref;
    if (w_reference) wref = HalfSpec::from(*w_reference);

    SolveTrace trace;
    Metric metric =
        make_metric(cfg, std::nullopt, uh, yh, std::max(yh.tensor_norm(), 1e-300), trace);
    TraceRecorder rec{cfg, trace};
    BlockDraw draw(blocks, cfg.seed, kMuStream, cfg.cyclic_debug);
    ColumnSampler col(u.cols(), cfg.column_weights, cfg.seed);

    auto w_value = [&]() { return wref ? norm_diff(w, *wref) : w.tensor_norm(); };
    rec.record(0, metric.eval(x));
    trace.w_channel.push_back({0, w_value()});
    Index t = 0;
    while (t < cfg.max_iters && !rec.done) {
        ++t;
        if (!column_step(w, uh, col.next())) ++trace.skipped_steps;
        if (!block_row_step(x, uh, yh, draw.next(), &w)) ++trace.skipped_steps;
        if (rec.should_trace(t)) {
            rec.record(t, metric.eval(x));
            trace.w_channel.push_back({t, w_value()});
        }
    }
    trace.iterations_run = t;
    trace.final_iterate = x.to_tensor();
    trace.residual_final = residual_norm(uh, x, yh) / std::max(yh.tensor_norm(), 1e-300);
    return trace;
}

namespace {

void validate_system(const FactorizedSystem& sys) {
    if (sys.U.cols() != sys.V.rows()) throw ShapeError("factorized system: U cols != V rows");
    if (sys.Y.rows() != sys.U.rows()) throw ShapeError("factorized system: Y rows != U rows");
    if (sys.U.depth() != sys.V.depth() || sys.U.depth() != sys.Y.depth())
        throw ShapeError("factorized system: depths differ");
}

// Shared driver for the two interlaced solvers.
SolveTrace run_factorized(const FactorizedSystem& sys, const BlockSet& blocks_u,
                          const BlockSet& blocks_v, const SolverConfig& cfg, bool extended) {
    validate_config(cfg);
    validate_system(sys);
    validate_blocks_for(blocks_u, sys.U, "outer blocks");
    validate_blocks_for(blocks_v, sys.V, "inner blocks");

    const HalfSpec uh = HalfSpec::from(sys.U);
    const HalfSpec vh = HalfSpec::from(sys.V);
    const HalfSpec yh = HalfSpec::from(sys.Y);
    HalfSpec z = cfg.z0 ? HalfSpec::from(*cfg.z0)
                        : HalfSpec::zero(sys.m1(), sys.l(), sys.p());
    if (z.rows != sys.m1() || z.cols != sys.l() || z.p != sys.p())
        throw ShapeError("z0 shape does not match the system");
    HalfSpec x = cfg.x0 ? HalfSpec::from(*cfg.x0)
                        : HalfSpec::zero(sys.n(), sys.l(), sys.p());
    if (x.rows != sys.n() || x.cols != sys.l() || x.p != sys.p())
        throw ShapeError("x0 shape does not match the system");
    HalfSpec w = yh;

    // composite operator for the residual metric
    HalfSpec uv = uh;
    for (Index k = 0; k <= uh.half(); ++k) {
        const auto ki = static_cast<std::size_t>(k);
        uv.f[ki] = uh.f[ki] * vh.f[ki];
    }
    uv.cols = vh.cols;

    SolveTrace trace;
    const double y_norm = std::max(yh.tensor_norm(), 1e-300);
    Metric metric = make_metric(cfg, sys.X_dag, uv, yh, y_norm, trace);

    std::optional<HalfSpec> zref;
    double zref_norm = 1.0;
    if (sys.Z_dag) {
        zref = HalfSpec::from(*sys.Z_dag);
        zref_norm = std::max(zref->tensor_norm(), 1e-300);
    }
    std::optional<HalfSpec> wref;
    if (extended && zref) {
        // measurement component orthogonal to range(U): Y - U * Z_dag
        HalfSpec w0 = yh;
        for (Index k = 0; k <= yh.half(); ++k) {
            const auto ki = static_cast<std::size_t>(k);
            w0.f[ki] = yh.f[ki] - uh.f[ki] * zref->f[ki];
        }
        wref = std::move(w0);
    }

    TraceRecorder rec{cfg, trace};
    BlockDraw mu_draw(blocks_u, cfg.seed, kMuStream, cfg.cyclic_debug);
    BlockDraw nu_draw(blocks_v, cfg.seed, kNuStream, cfg.cyclic_debug);
    ColumnSampler col(sys.m1(), cfg.column_weights, cfg.seed);

    auto record_all = [&](Index t) {
        rec.record(t, metric.eval(x));
        if (zref) trace.z_channel.push_back({t, norm_diff(z, *zref) / zref_norm});
        if (extended) trace.w_channel.push_back({t, wref ? norm_diff(w, *wref) : w.tensor_norm()});
    };

    record_all(0);
    Index t = 0;
    while (t < cfg.max_iters && !rec.done) {
        ++t;
        if (extended) {
            if (!column_step(w, uh, col.next())) ++trace.skipped_steps;
            if (!block_row_step(z, uh, yh, mu_draw.next(), &w)) ++trace.skipped_steps;
        } else {
            if (!block_row_step(z, uh, yh, mu_draw.next())) ++trace.skipped_steps;
        }
        if (!block_row_step(x, vh, z, nu_draw.next())) ++trace.skipped_steps;
        if (rec.should_trace(t)) record_all(t);
    }
    trace.iterations_run = t;
    trace.final_iterate = x.to_tensor();
    trace.residual_final = residual_norm(uv, x, yh) / y_norm;
    return trace;
}

} // namespace

SolveTrace factbrk(const FactorizedSystem& sys, const BlockSet& blocks_u,
                   const BlockSet& blocks_v, const SolverConfig& cfg) {
    return run_factorized(sys, blocks_u, blocks_v, cfg, /*extended=*/false);
}

SolveTrace factbrek(const FactorizedSystem& sys, const BlockSet& blocks_u,
                    const BlockSet& blocks_v, const SolverConfig& cfg) {
    return run_factorized(sys, blocks_u, blocks_v, cfg, /*extended=*/true);
}

FactorizedSystem matricized_equivalents(const FactorizedSystem& sys, Index element_budget) {
    validate_system(sys);
    FactorizedSystem out;
    out.U = fold(bcirc(sys.U, element_budget), 1);
    out.V = fold(bcirc(sys.V, element_budget), 1);
    out.Y = fold(unfold(sys.Y), 1);
    if (sys.Z_dag) out.Z_dag = fold(unfold(*sys.Z_dag), 1);
    if (sys.X_dag) out.X_dag = fold(unfold(*sys.X_dag), 1);
    out.eps = sys.eps;
    out.y_perp_norm = sys.y_perp_norm;
    out.outer_consistent = sys.outer_consistent;
    out.inner_consistent = sys.inner_consistent;
    out.theory_holds = sys.theory_holds;
    out.seed = sys.seed;
    if (!sys.case_id.empty()) out.case_id = sys.case_id + "-matricized";
    return out;
}

double factorized_residual(const FactorizedSystem& sys, const Tensor3& x) {
    const Tensor3 r = tprod(sys.U, tprod(sys.V, x));
    double s = 0.0;
    for (std::size_t i = 0; i < r.data().size(); ++i) {
        const double d = r.data()[i] - sys.Y.data()[i];
        s += d * d;
    }
    return std::sqrt(s) / std::max(fro_norm(sys.Y), 1e-300);
}

void write_trace_csv(const SolveTrace& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << (trace.metric_is_residual ? "t,residual\n" : "t,relative_error\n");
    char buf[64];
    for (const auto& pt : trace.iterations) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g\n", static_cast<long long>(pt.t), pt.value);
        os << buf;
    }
    if (!os) throw IoError("short write to " + path);
}

void write_trace_json(const SolveTrace& trace, const std::string& algorithm,
                      std::uint64_t seed, const std::string& blocks_desc,
                      const std::string& path) {
    nlohmann::json j;
    j["algorithm"] = algorithm;
    j["seed"] = seed;
    j["blocks"] = blocks_desc;
    j["metric"] = trace.metric_is_residual ? "residual" : "relative_error";
    j["iterations_run"] = trace.iterations_run;
    j["residual_final"] = trace.residual_final;
    auto channel = [](const std::vector<TracePoint>& pts) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : pts) arr.push_back({p.t, p.value});
        return arr;
    };
    j["trace"] = channel(trace.iterations);
    if (!trace.z_channel.empty()) j["z_trace"] = channel(trace.z_channel);
    if (!trace.w_channel.empty()) j["w_trace"] = channel(trace.w_channel);
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

} // namespace tkz
