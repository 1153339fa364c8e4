#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "qtrk/fft.hpp"
#include "qtrk/reference.hpp"
#include "qtrk/rng.hpp"
#include "qtrk/spectral.hpp"
#include "qtrk/tensor.hpp"
#include "qtrk/tprod.hpp"

using namespace qtrk;

namespace {

DenseTensor3 random_tensor(index_t m, index_t l, index_t n, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_tensor(m, l, n, rng);
}

bool bitwise_equal(const DenseTensor3& a, const DenseTensor3& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) ==
           0;
}

} // namespace

TEST_CASE("layout is tube-fiber contiguous") {
    DenseTensor3 t(2, 3, 4);
    t(1, 2, 3) = 7.5;
    CHECK(t.data()[(1 * 3 + 2) * 4 + 3] == 7.5);
    const double* tube = t.tube(1, 2);
    CHECK(tube[3] == 7.5);
    CHECK(t.size() == 24);
}

TEST_CASE("bounds-checked access throws on out-of-range indices") {
    DenseTensor3 t(2, 2, 2);
    CHECK_NOTHROW(t.at(1, 1, 1));
    CHECK_THROWS_AS(t.at(2, 0, 0), shape_error);
    CHECK_THROWS_AS(t.at(0, -1, 0), shape_error);
    CHECK_THROWS_AS(t.at(0, 0, 2), shape_error);
}

TEST_CASE("from_data validates size and finiteness") {
    CHECK_NOTHROW(DenseTensor3::from_data(1, 2, 1, {1.0, 2.0}));
    CHECK_THROWS_AS(DenseTensor3::from_data(1, 2, 1, {1.0}), shape_error);
    CHECK_THROWS_AS(DenseTensor3::from_data(1, 2, 1, {1.0, std::nan("")}), numerical_error);
    CHECK_THROWS_AS(DenseTensor3::from_data(1, 2, 1, {1.0, INFINITY}), numerical_error);
}

TEST_CASE("slice views expose the documented extents and values") {
    const DenseTensor3 t = random_tensor(3, 4, 5, 1);

    const SliceView row(t, SliceAxis::row, 2);
    CHECK(row.extent0() == 4);
    CHECK(row.extent1() == 5);
    CHECK(row(3, 4) == t(2, 3, 4));

    const SliceView col(t, SliceAxis::col, 1);
    CHECK(col.extent0() == 3);
    CHECK(col.extent1() == 5);
    CHECK(col(2, 4) == t(2, 1, 4));

    const SliceView frontal(t, SliceAxis::frontal, 3);
    CHECK(frontal.extent0() == 3);
    CHECK(frontal.extent1() == 4);
    CHECK(frontal(2, 3) == t(2, 3, 3));

    CHECK_THROWS_AS(SliceView(t, SliceAxis::row, 3), shape_error);
    CHECK_THROWS_AS(SliceView(t, SliceAxis::frontal, -1), shape_error);
}

TEST_CASE("frobenius norm and relative error") {
    DenseTensor3 zero(3, 2, 2);
    CHECK(frobenius_norm(zero) == 0.0);

    const DenseTensor3 pyth = DenseTensor3::from_data(1, 1, 2, {3.0, 4.0});
    CHECK(frobenius_norm(pyth) == doctest::Approx(5.0).epsilon(1e-15));

    const DenseTensor3 x = random_tensor(2, 2, 3, 2);
    CHECK(relative_error(x, x) == 0.0);
    CHECK_THROWS_AS(relative_error(x, zero), shape_error); // shape mismatch first
    CHECK_THROWS_AS(relative_error(zero, DenseTensor3(3, 2, 2)), domain_error);
}

TEST_CASE("unfold stacks frontal slices and fold inverts it") {
    // 2x1x2 tensor with frontal slices [[1],[2]] and [[3],[4]].
    DenseTensor3 t(2, 1, 2);
    t(0, 0, 0) = 1.0;
    t(1, 0, 0) = 2.0;
    t(0, 0, 1) = 3.0;
    t(1, 0, 1) = 4.0;
    const Eigen::MatrixXd u = unfold(t);
    REQUIRE(u.rows() == 4);
    REQUIRE(u.cols() == 1);
    CHECK(u(0, 0) == 1.0);
    CHECK(u(1, 0) == 2.0);
    CHECK(u(2, 0) == 3.0);
    CHECK(u(3, 0) == 4.0);

    const DenseTensor3 b = random_tensor(3, 2, 4, 3);
    CHECK(bitwise_equal(fold(unfold(b), 4), b));

    const DenseTensor3 flat = random_tensor(3, 2, 1, 4);
    CHECK(unfold(flat).rows() == 3); // n = 1: the single frontal slice

    CHECK_THROWS_AS(fold(Eigen::MatrixXd::Zero(5, 2), 2), shape_error);
}

TEST_CASE("bcirc block structure") {
    // 1x1x2 tube (a, b) -> [[a, b], [b, a]].
    DenseTensor3 t(1, 1, 2);
    t(0, 0, 0) = 3.0;
    t(0, 0, 1) = 5.0;
    const Eigen::MatrixXd c = bcirc(t);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 2);
    CHECK(c(0, 0) == 3.0);
    CHECK(c(1, 0) == 5.0);
    CHECK(c(0, 1) == 5.0);
    CHECK(c(1, 1) == 3.0);

    // n = 1 is the single frontal slice.
    const DenseTensor3 flat = random_tensor(3, 2, 1, 5);
    CHECK((bcirc(flat) - unfold(flat)).cwiseAbs().maxCoeff() == 0.0);

    // Block (r, c) equals frontal slice (r - c) mod n.
    const DenseTensor3 a = random_tensor(2, 3, 4, 6);
    const Eigen::MatrixXd ca = bcirc(a);
    REQUIRE(ca.rows() == 8);
    REQUIRE(ca.cols() == 12);
    for (index_t br = 0; br < 4; ++br) {
        for (index_t bc = 0; bc < 4; ++bc) {
            const index_t h = (br - bc + 4) % 4;
            for (index_t i = 0; i < 2; ++i) {
                for (index_t j = 0; j < 3; ++j) {
                    CHECK(ca(br * 2 + i, bc * 3 + j) == a(i, j, h));
                }
            }
        }
    }
}

TEST_CASE("ttranspose transposes slice 0 and reverses the rest") {
    // n = 1 is the ordinary matrix transpose.
    const DenseTensor3 flat = random_tensor(3, 2, 1, 7);
    const DenseTensor3 flat_t = ttranspose(flat);
    for (index_t i = 0; i < 3; ++i) {
        for (index_t j = 0; j < 2; ++j) {
            CHECK(flat_t(j, i, 0) == flat(i, j, 0));
        }
    }

    // Involution.
    const DenseTensor3 a = random_tensor(3, 2, 4, 8);
    CHECK(bitwise_equal(ttranspose(ttranspose(a)), a));

    // bcirc(ttranspose(A)) equals bcirc(A)^T entrywise.
    const Eigen::MatrixXd lhs = bcirc(ttranspose(a));
    const Eigen::MatrixXd rhs = bcirc(a).transpose();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fft_tubes basics") {
    // All-zero tensor transforms to all zeros.
    const SpectralTensor3 zero_hat = fft_tubes(DenseTensor3(2, 2, 3));
    for (index_t h = 0; h < 3; ++h) {
        CHECK(zero_hat.slice(h).cwiseAbs().maxCoeff() == 0.0);
    }

    // n = 1 is the identity map (complexified).
    const DenseTensor3 flat = random_tensor(2, 3, 1, 9);
    const SpectralTensor3 flat_hat = fft_tubes(flat);
    for (index_t i = 0; i < 2; ++i) {
        for (index_t j = 0; j < 3; ++j) {
            CHECK(flat_hat(i, j, 0).real() == doctest::Approx(flat(i, j, 0)).epsilon(1e-15));
            CHECK(flat_hat(i, j, 0).imag() == 0.0);
        }
    }

    // Delta tube (1, 0, 0, 0) with n = 4 transforms to the all-ones tube.
    DenseTensor3 delta(1, 1, 4);
    delta(0, 0, 0) = 1.0;
    const SpectralTensor3 delta_hat = fft_tubes(delta);
    for (index_t h = 0; h < 4; ++h) {
        CHECK(delta_hat(0, 0, h).real() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(std::abs(delta_hat(0, 0, h).imag()) < 1e-14);
    }
}

TEST_CASE("fft round trip and conjugate symmetry for real input") {
    const DenseTensor3 a = random_tensor(3, 4, 7, 10);
    const SpectralTensor3 a_hat = fft_tubes(a);
    const DenseTensor3 back = ifft_tubes(a_hat);
    CHECK(relative_error(back, a) < 1e-12);

    // Slice h and slice n - h are elementwise conjugates for 1 <= h <= n-1.
    for (index_t h = 1; h < 7; ++h) {
        for (index_t i = 0; i < 3; ++i) {
            for (index_t j = 0; j < 4; ++j) {
                const std::complex<double> lhs = a_hat(i, j, h);
                const std::complex<double> rhs = std::conj(a_hat(i, j, 7 - h));
                CHECK(std::abs(lhs - rhs) < 1e-10);
            }
        }
    }
}

TEST_CASE("ifft_tubes rejects non-real results") {
    // Asymmetric spectral data has an imaginary inverse transform.
    SpectralTensor3 bad(1, 1, 2);
    bad(0, 0, 0) = {0.0, 1.0};
    bad(0, 0, 1) = {0.0, 0.0};
    CHECK_THROWS_AS(ifft_tubes(bad), numerical_error);
}

TEST_CASE("tube DFT matches the direct transform at multi-stage depths") {
    // Depths like 48, 96, and 128 exercise FFT decompositions that scribble on
    // their input; each must still agree with the naive O(n^2) transform.
    for (index_t n : {48, 96, 128}) {
        const DenseTensor3 t = random_tensor(2, 2, n, 100 + static_cast<std::uint64_t>(n));
        const SpectralTensor3 hat = fft_tubes(t);
        double worst = 0.0;
        for (index_t i = 0; i < 2; ++i) {
            for (index_t j = 0; j < 2; ++j) {
                for (index_t h = 0; h < n; ++h) {
                    std::complex<double> sum(0.0, 0.0);
                    for (index_t g = 0; g < n; ++g) {
                        const double ang = -2.0 * std::numbers::pi * static_cast<double>(h) *
                                           static_cast<double>(g) / static_cast<double>(n);
                        sum += t(i, j, g) * std::complex<double>(std::cos(ang), std::sin(ang));
                    }
                    worst = std::max(worst, std::abs(sum - hat(i, j, h)));
                }
            }
        }
        CHECK(worst < 1e-10);
        CHECK(max_abs_diff(ifft_tubes(hat), t) < 1e-12);
    }
}

TEST_CASE("Parseval consistency between spatial and spectral norms") {
    const DenseTensor3 a = random_tensor(4, 3, 6, 11);
    const SpectralTensor3 a_hat = fft_tubes(a);
    double spectral_sq = 0.0;
    for (index_t h = 0; h < 6; ++h) {
        spectral_sq += a_hat.slice(h).squaredNorm();
    }
    const double spatial_sq = frobenius_norm(a) * frobenius_norm(a);
    CHECK(spatial_sq == doctest::Approx(spectral_sq / 6.0).epsilon(1e-10));
}

TEST_CASE("tprod identity and degenerate depth") {
    const DenseTensor3 a = random_tensor(3, 4, 5, 12);
    const DenseTensor3 id = identity_tensor(4, 5);
    CHECK(relative_error(tprod(a, id), a) < 1e-13);

    // n = 1 reduces to the ordinary matrix product.
    const DenseTensor3 ma = random_tensor(3, 4, 1, 13);
    const DenseTensor3 mb = random_tensor(4, 2, 1, 14);
    const DenseTensor3 mc = tprod(ma, mb);
    Eigen::MatrixXd am(3, 4), bm(4, 2);
    for (index_t i = 0; i < 3; ++i)
        for (index_t j = 0; j < 4; ++j) am(i, j) = ma(i, j, 0);
    for (index_t i = 0; i < 4; ++i)
        for (index_t j = 0; j < 2; ++j) bm(i, j) = mb(i, j, 0);
    const Eigen::MatrixXd cm = am * bm;
    for (index_t i = 0; i < 3; ++i) {
        for (index_t j = 0; j < 2; ++j) {
            CHECK(mc(i, j, 0) == doctest::Approx(cm(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("tprod rejects non-conforming shapes") {
    const DenseTensor3 a = random_tensor(2, 3, 2, 15);
    CHECK_THROWS_AS(tprod(a, random_tensor(2, 2, 2, 16)), shape_error);
    CHECK_THROWS_AS(tprod(a, random_tensor(3, 2, 3, 17)), shape_error);
}

TEST_CASE("tprod 2x2x2 against the explicit block-circulant product") {
    const DenseTensor3 a = random_tensor(2, 2, 2, 18);
    const DenseTensor3 b = random_tensor(2, 2, 2, 19);
    const Eigen::MatrixXd expected = bcirc(a) * unfold(b);
    const DenseTensor3 fast = tprod(a, b);
    const Eigen::MatrixXd got = unfold(fast);
    CHECK((expected - got).cwiseAbs().maxCoeff() / expected.norm() < 1e-12);
}

TEST_CASE("Fourier path equals block-circulant path on all shapes up to 4x4x4") {
    std::uint64_t seed = 100;
    for (index_t m = 1; m <= 4; ++m) {
        for (index_t l = 1; l <= 4; ++l) {
            for (index_t p = 1; p <= 4; ++p) {
                for (index_t n = 1; n <= 4; ++n) {
                    const DenseTensor3 a = random_tensor(m, l, n, seed++);
                    const DenseTensor3 b = random_tensor(l, p, n, seed++);
                    const DenseTensor3 fast = tprod(a, b);
                    const DenseTensor3 slow = ref::tprod_bcirc(a, b);
                    CHECK(relative_error(fast, slow) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("t-product associativity") {
    const DenseTensor3 a = random_tensor(3, 2, 4, 20);
    const DenseTensor3 b = random_tensor(2, 3, 4, 21);
    const DenseTensor3 c = random_tensor(3, 2, 4, 22);
    const DenseTensor3 lhs = tprod(tprod(a, b), c);
    const DenseTensor3 rhs = tprod(a, tprod(b, c));
    CHECK(relative_error(lhs, rhs) < 1e-10);
}

TEST_CASE("transpose reverses t-product order") {
    const DenseTensor3 a = random_tensor(3, 2, 4, 23);
    const DenseTensor3 b = random_tensor(2, 3, 4, 24);
    const DenseTensor3 lhs = ttranspose(tprod(a, b));
    const DenseTensor3 rhs = tprod(ttranspose(b), ttranspose(a));
    CHECK(relative_error(lhs, rhs) < 1e-12);
}

TEST_CASE("norm sandwich by block-circulant singular extremes") {
    const DenseTensor3 a = random_tensor(3, 2, 4, 25);
    const DenseTensor3 b = random_tensor(2, 2, 4, 26);
    const SingularExtremes s = bcirc_singular_extremes(a);
    const double prod_norm = frobenius_norm(tprod(a, b));
    const double b_norm = frobenius_norm(b);
    CHECK(prod_norm >= s.sigma_min * b_norm - 1e-9);
    CHECK(prod_norm <= s.sigma_max * b_norm + 1e-9);
}

TEST_CASE("t3b round trip preserves bytes") {
    const DenseTensor3 a = random_tensor(3, 4, 5, 27);
    const auto path = std::filesystem::temp_directory_path() / "qtrk_test_roundtrip.t3b";
    write_t3b(path, a);
    const DenseTensor3 back = read_t3b(path);
    CHECK(bitwise_equal(back, a));
    std::filesystem::remove(path);
}

TEST_CASE("t3b reader rejects malformed files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto good_path = dir / "qtrk_test_good.t3b";
    write_t3b(good_path, random_tensor(2, 2, 2, 28));

    // Bad magic.
    const auto bad_magic = dir / "qtrk_test_badmagic.t3b";
    {
        std::ifstream in(good_path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes[0] = 'X';
        std::ofstream out(bad_magic, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_t3b(bad_magic), config_error);

    // Truncated payload.
    const auto truncated = dir / "qtrk_test_trunc.t3b";
    {
        std::ifstream in(good_path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        bytes.resize(bytes.size() - 5);
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_t3b(truncated), config_error);

    // Trailing garbage.
    const auto trailing = dir / "qtrk_test_trailing.t3b";
    {
        std::filesystem::copy_file(good_path, trailing,
                                   std::filesystem::copy_options::overwrite_existing);
        std::ofstream out(trailing, std::ios::binary | std::ios::app);
        out.put('\0');
    }
    CHECK_THROWS_AS(read_t3b(trailing), config_error);

    for (const auto& p : {good_path, bad_magic, truncated, trailing}) {
        std::filesystem::remove(p);
    }
}

TEST_CASE("rng streams are deterministic and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    CHECK(Rng::split_seed(7, 1) != Rng::split_seed(7, 2));
    CHECK(Rng::split_seed(7, 1) == Rng::split_seed(7, 1));

    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform01();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        CHECK(u.below(7) < 7);
    }
}
