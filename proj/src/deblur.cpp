#include "tkz/deblur.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tkz/spectral.hpp"

namespace tkz {

namespace {

void check_kernel(const Eigen::MatrixXd& taps) {
    if (taps.rows() < 1 || taps.cols() < 1) throw ConfigError("empty blur kernel");
    if (!taps.allFinite()) throw ConfigError("blur kernel has non-finite taps");
}

} // namespace

BlurKernel BlurKernel::gaussian(Index size, double sigma) {
    if (size < 1 || sigma <= 0.0) throw ConfigError("bad gaussian kernel parameters");
    Eigen::MatrixXd taps(size, size);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    for (Index r = 0; r < size; ++r)
        for (Index col = 0; col < size; ++col) {
            const double dr = static_cast<double>(r) - c, dc = static_cast<double>(col) - c;
            taps(r, col) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    taps /= taps.sum();
    return {taps, Kind::Gaussian};
}

BlurKernel BlurKernel::averaging(Index size) {
    if (size < 1) throw ConfigError("bad averaging kernel size");
    Eigen::MatrixXd taps = Eigen::MatrixXd::Constant(
        size, size, 1.0 / static_cast<double>(size * size));
    return {taps, Kind::Averaging};
}

BlurKernel BlurKernel::custom(Eigen::MatrixXd taps) {
    check_kernel(taps);
    return {std::move(taps), Kind::Custom};
}

BlurKernel BlurKernel::delta() { return custom(Eigen::MatrixXd::Ones(1, 1)); }

VideoTensor VideoTensor::from_frames(Tensor3 frames) {
    VideoTensor v;
    v.refolded = refold_video(frames);
    v.frames = std::move(frames);
    return v;
}

VideoTensor VideoTensor::from_refolded(Tensor3 refolded) {
    VideoTensor v;
    v.frames = unrefold_video(refolded);
    v.refolded = std::move(refolded);
    return v;
}

Tensor3 build_blur_tensor(const BlurKernel& kernel, Index height, Index width) {
    check_kernel(kernel.taps);
    const Index kh = kernel.taps.rows(), kw = kernel.taps.cols();
    if (kh > height || kw > width)
        throw ConfigError("kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                          " does not fit a " + std::to_string(height) + "x" +
                          std::to_string(width) + " frame");
    // kernel padded to frame size, anchored at the top-left corner
    Eigen::MatrixXd pad = Eigen::MatrixXd::Zero(height, width);
    pad.block(0, 0, kh, kw) = kernel.taps;
    // frontal face i is circ(row i of the padded kernel)
    return Tensor3::from_generator(width, width, height, [&](Index u, Index v, Index i) {
        return pad(i, ((u - v) % width + width) % width);
    });
}

Tensor3 refold_video(const Tensor3& frames) {
    return Tensor3::from_generator(frames.cols(), frames.depth(), frames.rows(),
                                   [&](Index v, Index f, Index k) { return frames(k, v, f); });
}

Tensor3 unrefold_video(const Tensor3& refolded) {
    return Tensor3::from_generator(refolded.depth(), refolded.rows(), refolded.cols(),
                                   [&](Index k, Index v, Index f) { return refolded(v, f, k); });
}

Tensor3 blur_frames(const Tensor3& frames, const BlurKernel& kernel) {
    const Tensor3 h = build_blur_tensor(kernel, frames.rows(), frames.cols());
    return unrefold_video(tprod(h, refold_video(frames)));
}

namespace {

// Row grams alone cannot detect a blur kernel whose transfer function dies
// at some frequency; the recovery needs the operator invertible outright.
void check_blur_invertible(const Tensor3& h, const char* name) {
    const SpectralTensor s = to_spectral(h);
    double sigma_max = 0.0;
    std::vector<double> sigma_min(static_cast<std::size_t>(h.depth()));
    for (Index k = 0; k < h.depth(); ++k) {
        // BDC keeps this fast at full frame sizes (Jacobi crawls at 128x128)
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(s.frequency(k));
        const auto& sv = svd.singularValues();
        sigma_max = std::max(sigma_max, sv(0));
        sigma_min[static_cast<std::size_t>(k)] = sv(sv.size() - 1);
    }
    for (Index k = 0; k < h.depth(); ++k)
        if (sigma_min[static_cast<std::size_t>(k)] < kGramConditionThreshold * sigma_max)
            throw AssumptionViolation(std::string(name) +
                                      " blur operator loses rank at frequency " +
                                      std::to_string(k) + " (sigma " +
                                      std::to_string(sigma_min[static_cast<std::size_t>(k)]) +
                                      " vs scale " + std::to_string(sigma_max) + ")");
}

} // namespace

DeblurResult deblur_factorized(const VideoTensor& blurred, const BlurKernel& k1,
                               const BlurKernel& k2, DeblurAlg alg, Index mu_size,
                               Index nu_size, const SolverConfig& cfg) {
    const Index height = blurred.frames.rows(), width = blurred.frames.cols();
    FactorizedSystem sys;
    sys.U = build_blur_tensor(k1, height, width);
    sys.V = build_blur_tensor(k2, height, width);
    sys.Y = blurred.refolded;
    check_blur_invertible(sys.U, "first");
    check_blur_invertible(sys.V, "second");
    sys.seed = cfg.seed;
    // no cached reference: the trace records the relative residual

    const BlockSet blocks_u = make_all_of_size(width, mu_size, sys.U.cols());
    const BlockSet blocks_v = make_all_of_size(width, nu_size, sys.V.cols());
    SolveTrace trace = alg == DeblurAlg::FacTBRK ? factbrk(sys, blocks_u, blocks_v, cfg)
                                                 : factbrek(sys, blocks_u, blocks_v, cfg);

    Tensor3 recovered = unrefold_video(trace.final_iterate);
    recovered = Tensor3::from_generator(
        recovered.rows(), recovered.cols(), recovered.depth(),
        [&](Index i, Index j, Index k) { return std::clamp(recovered(i, j, k), 0.0, 1.0); });
    return {std::move(recovered), std::move(trace)};
}

void write_pgm(const Eigen::MatrixXd& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (Index r = 0; r < image.rows(); ++r)
        for (Index c = 0; c < image.cols(); ++c) {
            const double v = std::clamp(image(r, c), 0.0, 1.0);
            const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
            os.put(static_cast<char>(byte));
        }
    if (!os) throw IoError("short write to " + path);
}

namespace {

int next_pgm_token(std::istream& is) {
    // skips whitespace and # comments
    while (true) {
        const int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v = 0;
    is >> v;
    return v;
}

} // namespace

Eigen::MatrixXd read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw IoError(path + ": only binary (P5) PGM is supported");
    const int w = next_pgm_token(is);
    const int h = next_pgm_token(is);
    const int maxval = next_pgm_token(is);
    if (w < 1 || h < 1 || maxval != 255) throw IoError(path + ": unsupported PGM header");
    is.get(); // single whitespace after maxval
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw IoError(path + ": truncated pixel data");
    Eigen::MatrixXd img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            img(r, c) = buf[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                            static_cast<std::size_t>(c)] /
                        255.0;
    return img;
}

Tensor3 frames_from_pgm_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".pgm") paths.push_back(entry.path().string());
    if (paths.empty()) throw IoError("no .pgm frames in " + dir);
    std::sort(paths.begin(), paths.end());
    std::vector<Eigen::MatrixXd> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(read_pgm(p));
    const Index h = frames[0].rows(), w = frames[0].cols();
    for (const auto& f : frames)
        if (f.rows() != h || f.cols() != w) throw IoError("frames differ in size in " + dir);
    return Tensor3::from_generator(h, w, static_cast<Index>(frames.size()),
                                   [&](Index i, Index j, Index k) {
                                       return frames[static_cast<std::size_t>(k)](i, j);
                                   });
}

void write_frames_pgm(const Tensor3& frames, const std::string& dir,
                      const std::string& prefix) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (Index k = 0; k < frames.depth(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "%s%04lld.pgm", prefix.c_str(),
                      static_cast<long long>(k));
        write_pgm(frames.frontal_slice(k), (fs::path(dir) / name).string());
    }
}

} // namespace tkz
