#include "qtrk/deblur.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "qtrk/tprod.hpp"

namespace qtrk {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double restricted_mse(const DenseTensor3& x, const DenseTensor3& ref,
                      const std::vector<index_t>& rows) {
    if (!x.same_shape(ref)) throw shape_error("psnr: shape mismatch");
    if (rows.empty()) throw domain_error("psnr: empty row restriction");
    double sum = 0.0;
    for (index_t i : rows) {
        if (i < 0 || i >= x.rows()) throw shape_error("psnr: row index out of range");
        for (index_t j = 0; j < x.cols(); ++j) {
            for (index_t h = 0; h < x.depth(); ++h) {
                const double d = x(i, j, h) - ref(i, j, h);
                sum += d * d;
            }
        }
    }
    return sum / (static_cast<double>(rows.size()) * static_cast<double>(x.cols()) *
                  static_cast<double>(x.depth()));
}

int read_pgm_token(std::istream& is, const std::filesystem::path& path) {
    // Skips whitespace and '#' comment lines, then reads one unsigned decimal token.
    for (;;) {
        const int c = is.peek();
        if (c == std::char_traits<char>::eof()) {
            break;
        } else if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int value = 0;
    if (!(is >> value) || value < 0) {
        throw config_error("malformed PGM header: " + path.string());
    }
    return value;
}

} // namespace

BlurSpec make_blur_spec(Eigen::MatrixXd kernel) {
    if (kernel.rows() < 1 || kernel.cols() < 1) throw shape_error("empty blur kernel");
    if (std::abs(kernel.sum() - 1.0) > 1e-12) {
        throw domain_error("blur kernel entries must sum to 1 (got " +
                           std::to_string(kernel.sum()) + ")");
    }
    return {std::move(kernel)};
}

Eigen::MatrixXd gaussian_kernel(index_t size, double sigma) {
    if (size < 1) throw domain_error("gaussian_kernel: size must be >= 1");
    if (!(sigma > 0.0)) throw domain_error("gaussian_kernel: sigma must be positive");
    Eigen::MatrixXd k(size, size);
    const double center = static_cast<double>(size - 1) / 2.0;
    for (index_t r = 0; r < size; ++r) {
        for (index_t c = 0; c < size; ++c) {
            const double dr = static_cast<double>(r) - center;
            const double dc = static_cast<double>(c) - center;
            k(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    }
    k /= k.sum();
    return k;
}

Eigen::MatrixXd pad_kernel(const Eigen::MatrixXd& kernel, index_t rows, index_t cols) {
    if (kernel.rows() > rows || kernel.cols() > cols) {
        throw shape_error("pad_kernel: kernel larger than frame");
    }
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(rows, cols);
    padded.topLeftCorner(kernel.rows(), kernel.cols()) = kernel;
    return padded;
}

DenseTensor3 blur_tensor(const Eigen::MatrixXd& padded) {
    const index_t l = padded.rows();
    const index_t p = padded.cols();
    DenseTensor3 out(p, p, l);
    for (index_t i = 0; i < l; ++i) {
        for (index_t r = 0; r < p; ++r) {
            for (index_t c = 0; c < p; ++c) {
                out(r, c, i) = padded(i, (r - c + p) % p);
            }
        }
    }
    return out;
}

DenseTensor3 reorder_to_system(const DenseTensor3& video) {
    DenseTensor3 out(video.cols(), video.depth(), video.rows());
    for (index_t i = 0; i < video.rows(); ++i) {
        for (index_t b = 0; b < video.cols(); ++b) {
            for (index_t t = 0; t < video.depth(); ++t) {
                out(b, t, i) = video(i, b, t);
            }
        }
    }
    return out;
}

DenseTensor3 reorder_from_system(const DenseTensor3& system) {
    DenseTensor3 out(system.depth(), system.rows(), system.cols());
    for (index_t b = 0; b < system.rows(); ++b) {
        for (index_t t = 0; t < system.cols(); ++t) {
            for (index_t i = 0; i < system.depth(); ++i) {
                out(i, b, t) = system(b, t, i);
            }
        }
    }
    return out;
}

DenseTensor3 video_to_tensor(const VideoFrames& frames) {
    if (frames.frames.empty()) throw shape_error("video_to_tensor: no frames");
    DenseTensor3 out(frames.height, frames.width,
                     static_cast<index_t>(frames.frames.size()));
    for (std::size_t t = 0; t < frames.frames.size(); ++t) {
        const Eigen::MatrixXd& f = frames.frames[t];
        if (f.rows() != frames.height || f.cols() != frames.width) {
            throw shape_error("video_to_tensor: inconsistent frame size");
        }
        for (index_t i = 0; i < frames.height; ++i) {
            for (index_t b = 0; b < frames.width; ++b) {
                out(i, b, static_cast<index_t>(t)) = f(i, b);
            }
        }
    }
    return out;
}

VideoFrames tensor_to_video(const DenseTensor3& video) {
    VideoFrames out;
    out.height = video.rows();
    out.width = video.cols();
    out.frames.reserve(static_cast<std::size_t>(video.depth()));
    for (index_t t = 0; t < video.depth(); ++t) {
        Eigen::MatrixXd f(video.rows(), video.cols());
        for (index_t i = 0; i < video.rows(); ++i) {
            for (index_t b = 0; b < video.cols(); ++b) f(i, b) = video(i, b, t);
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

Eigen::MatrixXd read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error("cannot open PGM: " + path.string());
    char magic[2] = {0, 0};
    is.read(magic, 2);
    if (!is || magic[0] != 'P' || magic[1] != '5') {
        throw config_error("not a binary PGM (P5): " + path.string());
    }
    const int width = read_pgm_token(is, path);
    const int height = read_pgm_token(is, path);
    const int maxval = read_pgm_token(is, path);
    if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
        throw config_error("unsupported PGM geometry or depth: " + path.string());
    }
    is.get(); // single whitespace byte after the header
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!is) throw config_error("truncated PGM payload: " + path.string());
    Eigen::MatrixXd frame(height, width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            frame(r, c) = clamp01(static_cast<double>(raw[static_cast<std::size_t>(r) * width + c]) /
                                  static_cast<double>(maxval));
        }
    }
    return frame;
}

void write_pgm(const std::filesystem::path& path, const Eigen::MatrixXd& frame) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw config_error("cannot open PGM for writing: " + path.string());
    os << "P5\n" << frame.cols() << " " << frame.rows() << "\n255\n";
    for (index_t r = 0; r < frame.rows(); ++r) {
        for (index_t c = 0; c < frame.cols(); ++c) {
            const unsigned char v =
                static_cast<unsigned char>(std::lround(clamp01(frame(r, c)) * 255.0));
            os.put(static_cast<char>(v));
        }
    }
    if (!os) throw config_error("PGM write failed: " + path.string());
}

VideoFrames read_pgm_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> paths;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
            paths.push_back(entry.path());
        }
    }
    if (ec) throw config_error("cannot list frame directory: " + dir.string());
    std::sort(paths.begin(), paths.end(),
              [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
    if (paths.empty()) throw config_error("no .pgm frames in " + dir.string());
    VideoFrames out;
    for (const auto& path : paths) {
        Eigen::MatrixXd frame = read_pgm(path);
        if (out.frames.empty()) {
            out.height = frame.rows();
            out.width = frame.cols();
        } else if (frame.rows() != out.height || frame.cols() != out.width) {
            throw config_error("frame size mismatch at " + path.string());
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

VideoFrames synthetic_frames(index_t height, index_t width, index_t count,
                             std::uint64_t seed) {
    if (height < 1 || width < 1 || count < 1) {
        throw shape_error("synthetic_frames: dimensions must be positive");
    }
    Rng rng(seed);
    struct Blob {
        double r0, c0, vr, vc, radius, amplitude;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < 3; ++b) {
        blobs.push_back({rng.uniform01() * static_cast<double>(height),
                         rng.uniform01() * static_cast<double>(width),
                         (rng.uniform01() - 0.5) * static_cast<double>(height) * 0.15,
                         (rng.uniform01() - 0.5) * static_cast<double>(width) * 0.15,
                         (0.08 + 0.12 * rng.uniform01()) * static_cast<double>(std::min(height, width)),
                         0.5 + 0.5 * rng.uniform01()});
    }

    std::vector<Eigen::MatrixXd> frames;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (index_t t = 0; t < count; ++t) {
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(height, width);
        for (const Blob& blob : blobs) {
            const double rc = blob.r0 + blob.vr * static_cast<double>(t);
            const double cc = blob.c0 + blob.vc * static_cast<double>(t);
            for (index_t r = 0; r < height; ++r) {
                for (index_t c = 0; c < width; ++c) {
                    const double dr = static_cast<double>(r) - rc;
                    const double dc = static_cast<double>(c) - cc;
                    f(r, c) += blob.amplitude *
                               std::exp(-(dr * dr + dc * dc) / (2.0 * blob.radius * blob.radius));
                }
            }
        }
        lo = std::min(lo, f.minCoeff());
        hi = std::max(hi, f.maxCoeff());
        frames.push_back(std::move(f));
    }
    const double span = hi > lo ? hi - lo : 1.0;
    VideoFrames out;
    out.height = height;
    out.width = width;
    for (Eigen::MatrixXd& f : frames) {
        f = ((f.array() - lo) / span * 0.8 + 0.1).matrix();
        out.frames.push_back(std::move(f));
    }
    return out;
}

Eigen::MatrixXd roll_frame(const Eigen::MatrixXd& frame, index_t down, index_t right) {
    const index_t rows = frame.rows();
    const index_t cols = frame.cols();
    Eigen::MatrixXd out(rows, cols);
    for (index_t r = 0; r < rows; ++r) {
        for (index_t c = 0; c < cols; ++c) {
            out(((r + down) % rows + rows) % rows, ((c + right) % cols + cols) % cols) =
                frame(r, c);
        }
    }
    return out;
}

double psnr(const DenseTensor3& x, const DenseTensor3& ref) {
    std::vector<index_t> all(static_cast<std::size_t>(x.rows()));
    for (index_t i = 0; i < x.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
    return psnr_rows(x, ref, all);
}

double psnr_rows(const DenseTensor3& x, const DenseTensor3& ref,
                 const std::vector<index_t>& rows) {
    const double mse = restricted_mse(x, ref, rows);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

DeblurResult run_deblur(const VideoFrames& frames, const BlurSpec& spec,
                        const CorruptionPlan& plan, const SolverConfig& config) {
    const DenseTensor3 video = video_to_tensor(frames);
    const Eigen::MatrixXd padded = pad_kernel(spec.kernel, video.rows(), video.cols());
    const DenseTensor3 blur = blur_tensor(padded);

    DeblurResult result;
    result.truth_system = reorder_to_system(video);
    result.blurred_system = tprod(blur, result.truth_system);
    result.corrupted_system = apply(result.blurred_system, plan);

    const DenseTensor3 x0(result.truth_system.rows(), result.truth_system.cols(),
                          result.truth_system.depth());
    SolveResult solved = solve(blur, result.corrupted_system, config, &result.truth_system, x0,
                               &result.blurred_system);
    result.recovered_system = std::move(solved.x);
    result.record = std::move(solved.record);

    result.baseline_system = least_norm_solve(blur, result.corrupted_system);
    result.baseline_rel_residual =
        frobenius_norm(subtract(tprod(blur, result.baseline_system), result.blurred_system)) /
        frobenius_norm(result.blurred_system);

    const std::vector<index_t> clean_rows = plan.uncorrupted_rows();
    result.psnr_recovered = psnr_rows(result.recovered_system, result.truth_system, clean_rows);
    result.psnr_baseline = psnr_rows(result.baseline_system, result.truth_system, clean_rows);

    result.recovered = tensor_to_video(reorder_from_system(result.recovered_system));
    result.baseline = tensor_to_video(reorder_from_system(result.baseline_system));
    return result;
}

} // namespace qtrk
