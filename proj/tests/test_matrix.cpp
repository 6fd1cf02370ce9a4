#include <catch2/catch_amalgamated.hpp>

#include "tokenbind/matrix.hpp"
#include "tokenbind/rng.hpp"

using namespace tokenbind;

TEST_CASE("matrix construction and access", "[matrix]") {
    Matrix m(2, 3);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 3);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(m(r, c) == 0.0);

    m(1, 2) = 4.5;
    REQUIRE(m(1, 2) == 4.5);
    REQUIRE(m.row(1)[2] == 4.5);

    SECTION("data constructor validates length") {
        REQUIRE_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), Error);
    }
    SECTION("data constructor rejects non-finite entries") {
        try {
            Matrix bad(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()});
            FAIL("expected NotFinite");
        } catch (const Error& e) {
            REQUIRE(e.code() == Errc::NotFinite);
        }
    }
}

TEST_CASE("identity matrix", "[matrix]") {
    const Matrix i3 = Matrix::identity(3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(i3(r, c) == (r == c ? 1.0 : 0.0));
}

TEST_CASE("matmul agrees with hand-computed product", "[matrix]") {
    const Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
    const Matrix b(3, 2, {7, 8, 9, 10, 11, 12});
    const Matrix ab = matmul(a, b);
    REQUIRE(ab.rows() == 2);
    REQUIRE(ab.cols() == 2);
    REQUIRE(ab(0, 0) == 58.0);  // 1*7 + 2*9 + 3*11
    REQUIRE(ab(0, 1) == 64.0);
    REQUIRE(ab(1, 0) == 139.0);
    REQUIRE(ab(1, 1) == 154.0);

    REQUIRE_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("matmul_nt and matmul_tn match transpose-then-multiply", "[matrix]") {
    Rng rng(11);
    const Matrix a = rng.gaussian_matrix(4, 6);
    const Matrix b = rng.gaussian_matrix(5, 6);
    const Matrix c = rng.gaussian_matrix(4, 7);

    const Matrix nt = matmul_nt(a, b);          // a b^T
    const Matrix nt_ref = matmul(a, transpose(b));
    const Matrix tn = matmul_tn(a, c);          // a^T c
    const Matrix tn_ref = matmul(transpose(a), c);

    REQUIRE(nt.rows() == 4);
    REQUIRE(nt.cols() == 5);
    for (std::size_t i = 0; i < nt.data().size(); ++i)
        REQUIRE(nt.data()[i] == Catch::Approx(nt_ref.data()[i]).margin(1e-14));
    REQUIRE(tn.rows() == 6);
    REQUIRE(tn.cols() == 7);
    for (std::size_t i = 0; i < tn.data().size(); ++i)
        REQUIRE(tn.data()[i] == Catch::Approx(tn_ref.data()[i]).margin(1e-14));
}

TEST_CASE("identity is neutral for matmul", "[matrix]") {
    Rng rng(12);
    const Matrix a = rng.gaussian_matrix(5, 5);
    const Matrix left = matmul(Matrix::identity(5), a);
    const Matrix right = matmul(a, Matrix::identity(5));
    REQUIRE(left.data() == a.data());
    REQUIRE(right.data() == a.data());
}

TEST_CASE("dot, norm2, frobenius, scaled", "[matrix]") {
    const std::vector<double> u = {3.0, 4.0};
    const std::vector<double> v = {1.0, -1.0};
    REQUIRE(dot(u, v) == -1.0);
    REQUIRE(norm2(u) == 5.0);

    const Matrix m(2, 2, {1, 2, 2, 4});
    REQUIRE(frobenius_norm(m) == 5.0);
    const Matrix s = scaled(m, 2.0);
    REQUIRE(s(1, 1) == 8.0);
}

TEST_CASE("softmax_rows produces row distributions", "[matrix]") {
    SECTION("uniform logits give uniform rows") {
        const Matrix p = softmax_rows(Matrix(3, 4));
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c) REQUIRE(p(r, c) == Catch::Approx(0.25));
    }
    SECTION("matches brute-force exp/sum on random logits") {
        Rng rng(13);
        const Matrix logits = rng.gaussian_matrix(6, 4, 3.0);
        const Matrix p = softmax_rows(logits);
        for (std::size_t r = 0; r < 6; ++r) {
            double z = 0.0;
            for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(r, c));
            double row_sum = 0.0;
            for (std::size_t c = 0; c < 4; ++c) {
                REQUIRE(p(r, c) == Catch::Approx(std::exp(logits(r, c)) / z).epsilon(1e-12));
                row_sum += p(r, c);
            }
            REQUIRE(row_sum == Catch::Approx(1.0).margin(1e-12));
        }
    }
    SECTION("max subtraction keeps huge logits finite") {
        const Matrix p = softmax_rows(Matrix(1, 2, {1000.0, 0.0}));
        REQUIRE(p(0, 0) == Catch::Approx(1.0));
        REQUIRE(p(0, 1) >= 0.0);
    }
}
