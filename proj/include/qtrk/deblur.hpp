#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "qtrk/corruption.hpp"
#include "qtrk/solver.hpp"
#include "qtrk/tensor.hpp"

namespace qtrk {

// A video as a list of height x width frames with intensities in [0, 1].
struct VideoFrames {
    index_t height = 0;
    index_t width = 0;
    std::vector<Eigen::MatrixXd> frames;
};

// Blur kernel with entries summing to 1 (validated to 1e-12).
struct BlurSpec {
    Eigen::MatrixXd kernel;
};

BlurSpec make_blur_spec(Eigen::MatrixXd kernel);

// size x size kernel sampled from exp(-r^2 / (2 sigma^2)) about the center,
// renormalized to sum 1.
Eigen::MatrixXd gaussian_kernel(index_t size, double sigma);

// Kernel placed at the top-left origin of a rows x cols zero matrix (corner anchor;
// circular convolution absorbs the resulting cyclic shift in the inverse problem).
Eigen::MatrixXd pad_kernel(const Eigen::MatrixXd& kernel, index_t rows, index_t cols);

// Blurring tensor of a padded l x p kernel: frontal slice i is the p x p circulant
// matrix whose first column is row i of the padded kernel (subsequent columns are
// cyclic down-shifts). Applying it to a reordered video performs genuine 2-D circular
// convolution of each frame.
DenseTensor3 blur_tensor(const Eigen::MatrixXd& padded);

// Axis permutation making the video's horizontal slices the frontal slices of the
// system tensor: video (l x p x n) -> system (p x n x l), with
// system(b, t, i) = video(i, b, t). Round trip is bitwise identity.
DenseTensor3 reorder_to_system(const DenseTensor3& video);
DenseTensor3 reorder_from_system(const DenseTensor3& system);

DenseTensor3 video_to_tensor(const VideoFrames& frames); // l x p x n
VideoFrames tensor_to_video(const DenseTensor3& video);

// Binary 8-bit PGM (P5). Reading scales to [0, 1] and clamps; writing clamps to
// [0, 1] then quantizes to 255 levels.
Eigen::MatrixXd read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& frame);

// All *.pgm files in the directory, ordered lexicographically by filename.
VideoFrames read_pgm_dir(const std::filesystem::path& dir);

// Deterministic smooth test video: Gaussian blobs drifting across frames,
// normalized to intensities inside [0, 1].
VideoFrames synthetic_frames(index_t height, index_t width, index_t count,
                             std::uint64_t seed);

// Cyclic shift for display alignment of corner-anchored blurs.
Eigen::MatrixXd roll_frame(const Eigen::MatrixXd& frame, index_t down, index_t right);

// Peak signal-to-noise ratio with MAX = 1, over all entries or restricted to the
// given first-axis slices. 10 * log10(1 / MSE).
double psnr(const DenseTensor3& x, const DenseTensor3& ref);
double psnr_rows(const DenseTensor3& x, const DenseTensor3& ref,
                 const std::vector<index_t>& rows);

struct DeblurResult {
    VideoFrames recovered;
    VideoFrames baseline;
    RunRecord record;
    DenseTensor3 truth_system;     // reordered original video
    DenseTensor3 blurred_system;   // uncorrupted right-hand side
    DenseTensor3 corrupted_system; // what the solver sees
    DenseTensor3 recovered_system;
    DenseTensor3 baseline_system;
    double psnr_recovered; // on rows the plan left uncorrupted, vs the original
    double psnr_baseline;
    double baseline_rel_residual; // baseline vs the uncorrupted right-hand side
};

// Blurs the frames, applies the corruption plan (whose shape must match the system
// tensor p x n x l), solves from the zero initial iterate with the configured
// variant, and computes the least-norm baseline on the same corrupted data.
// Residuals in the record are measured against the uncorrupted right-hand side.
DeblurResult run_deblur(const VideoFrames& frames, const BlurSpec& spec,
                        const CorruptionPlan& plan, const SolverConfig& config);

} // namespace qtrk
