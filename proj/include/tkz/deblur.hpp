#pragma once

#include <Eigen/Dense>
#include <string>

#include "tkz/solvers.hpp"

namespace tkz {

/// Small convolution stencil. Gaussian and averaging kernels are normalized
/// to unit sum, so blurring preserves each frame's mean.
struct BlurKernel {
    enum class Kind { Gaussian, Averaging, Custom };
    Eigen::MatrixXd taps;
    Kind kind = Kind::Custom;

    static BlurKernel gaussian(Index size = 5, double sigma = 1.0);
    static BlurKernel averaging(Index size = 5);
    static BlurKernel custom(Eigen::MatrixXd taps);
    /// 1x1 identity kernel; blurring with it is a no-op.
    static BlurKernel delta();
};

/// Grayscale video: frames as height x width x frame-count with values in
/// [0, 1], plus the refolded width x frames x height layout the t-linear
/// deblurring system acts on.
struct VideoTensor {
    Tensor3 frames;
    Tensor3 refolded;

    static VideoTensor from_frames(Tensor3 frames);
    static VideoTensor from_refolded(Tensor3 refolded);
};

/// Frame-wise circular 2-D convolution as a t-product operator: the result
/// is width x width x height with frontal face i the circulant matrix of row
/// i of the kernel padded (anchored top-left) to the frame size. Applying it
/// to a refolded video blurs every frame.
Tensor3 build_blur_tensor(const BlurKernel& kernel, Index height, Index width);

/// Index permutation between the frame stack (m x n x p) and the solver
/// layout (n x p x m): refolded(v, f, k) = frames(k, v, f).
Tensor3 refold_video(const Tensor3& frames);
Tensor3 unrefold_video(const Tensor3& refolded);

/// Circularly blurs every frame with the kernel (top-left anchor, wraps).
Tensor3 blur_frames(const Tensor3& frames, const BlurKernel& kernel);

enum class DeblurAlg { FacTBRK, FacTBREK };

struct DeblurResult {
    Tensor3 frames; // recovered, clamped to [0, 1]
    SolveTrace trace;
};

/// Recovers the video behind two sequential circular blurs by solving
/// U * V * X = Y with the factorized solvers; U is the k1 operator and V the
/// k2 operator. The trace records the relative residual.
DeblurResult deblur_factorized(const VideoTensor& blurred, const BlurKernel& k1,
                               const BlurKernel& k2, DeblurAlg alg, Index mu_size,
                               Index nu_size, const SolverConfig& cfg);

// --- frame I/O (binary 8-bit PGM, values scaled to [0, 1]) ---------------

void write_pgm(const Eigen::MatrixXd& image, const std::string& path);
Eigen::MatrixXd read_pgm(const std::string& path);

/// Reads every *.pgm in the directory, sorted by filename, as frames.
Tensor3 frames_from_pgm_dir(const std::string& dir);
void write_frames_pgm(const Tensor3& frames, const std::string& dir,
                      const std::string& prefix);

} // namespace tkz
