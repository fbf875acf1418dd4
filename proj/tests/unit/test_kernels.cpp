#include <cmath>
#include <vector>

#include "doctest.h"
#include "orgseg/kernels.hpp"
#include "orgseg/rng.hpp"

using namespace orgseg;
using kernels::KernelTable;

namespace {

std::vector<float> randoms(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

void check_close(const std::vector<float>& got, const std::vector<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::abs(got[i] - want[i]) <= tol * (1.0 + std::abs(want[i])));
  }
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar table is always available and first") {
  const auto tables = kernels::available_tables();
  REQUIRE(!tables.empty());
  CHECK(tables.front()->name == "scalar");
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK(!kernels::select("neon"));
  if (kernels::cpu_has_avx2() && kernels::avx2_table()) {
    CHECK(tables.size() == 2);
    CHECK(kernels::select("avx2"));
    CHECK(kernels::active().name == "avx2");
  }
}

TEST_CASE("every table matches double-precision oracles") {
  for (const KernelTable* t : kernels::available_tables()) {
    CAPTURE(t->name);
    const int shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {8, 64, 72}, {31, 129, 145}, {2, 7, 300}};
    for (const auto& shape : shapes) {
      const int m = shape[0], n = shape[1], k = shape[2];
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      const int lda = k + 3, ldb = n + 1, ldc = n + 2;
      const auto a = randoms(static_cast<std::size_t>(m) * lda, 1);
      const auto b = randoms(static_cast<std::size_t>(k) * ldb, 2);
      const auto c0 = randoms(static_cast<std::size_t>(m) * ldc, 3);
      for (bool acc : {false, true}) {
        auto c = c0;
        t->gemm_nn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, acc);
        std::vector<double> want(c0.begin(), c0.end());
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            double s = acc ? c0[i * ldc + j] : 0.0;
            for (int p = 0; p < k; ++p) s += double(a[i * lda + p]) * b[p * ldb + j];
            want[i * ldc + j] = s;
          }
        check_close(c, want, 1e-5 * std::sqrt(k));
      }
      // B^T layout: b is n x k
      const int ldbt = k + 1;
      const auto bt = randoms(static_cast<std::size_t>(n) * ldbt, 4);
      auto c = c0;
      t->gemm_nt(m, n, k, a.data(), lda, bt.data(), ldbt, c.data(), ldc, true);
      std::vector<double> want(c0.begin(), c0.end());
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double s = c0[i * ldc + j];
          for (int p = 0; p < k; ++p) s += double(a[i * lda + p]) * bt[j * ldbt + p];
          want[i * ldc + j] = s;
        }
      check_close(c, want, 1e-5 * std::sqrt(k));
    }

    for (std::size_t n : {std::size_t{1}, std::size_t{7}, std::size_t{8}, std::size_t{33}, std::size_t{1001}}) {
      CAPTURE(n);
      const auto x = randoms(n, 10 + n), y0 = randoms(n, 20 + n);
      std::vector<float> y(n);
      t->scale_shift(x.data(), y.data(), n, 1.5f, -0.25f);
      std::vector<double> want(n);
      for (std::size_t i = 0; i < n; ++i) want[i] = 1.5 * x[i] - 0.25;
      check_close(y, want, 1e-6);

      t->relu_forward(x.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == (x[i] > 0 ? x[i] : 0.0f));
      t->relu_backward(x.data(), y0.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == (x[i] > 0 ? y0[i] : 0.0f));

      double s = 0, ss = 0, d = 0;
      for (std::size_t i = 0; i < n; ++i) s += x[i], ss += double(x[i]) * x[i], d += double(x[i]) * y0[i];
      double gs = 0, gss = 0;
      t->sum_sumsq(x.data(), n, &gs, &gss);
      CHECK(gs == doctest::Approx(s).epsilon(1e-9));
      CHECK(gss == doctest::Approx(ss).epsilon(1e-9));
      CHECK(t->dot(x.data(), y0.data(), n) == doctest::Approx(d).epsilon(1e-9));

      y = y0;
      t->axpy(0.75f, x.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) want[i] = y0[i] + 0.75 * x[i];
      check_close(y, want, 1e-6);

      // Adam, two steps, against a double-precision reference.
      auto w = randoms(n, 30 + n);
      const auto g = randoms(n, 40 + n);
      std::vector<float> m(n, 0.0f), v(n, 0.0f);
      std::vector<double> rw(w.begin(), w.end()), rm(n, 0.0), rv(n, 0.0);
      for (int step = 1; step <= 2; ++step) {
        kernels::AdamStep st;
        st.bias_correction1 = 1.0f - std::pow(0.9f, float(step));
        st.bias_correction2 = 1.0f - std::pow(0.999f, float(step));
        t->adam_update(w.data(), g.data(), m.data(), v.data(), n, st);
        for (std::size_t i = 0; i < n; ++i) {
          rm[i] = 0.9 * rm[i] + 0.1 * g[i];
          rv[i] = 0.999 * rv[i] + 0.001 * double(g[i]) * g[i];
          const double mh = rm[i] / st.bias_correction1, vh = rv[i] / st.bias_correction2;
          rw[i] -= 0.003 * mh / (std::sqrt(vh) + 1e-8);
        }
      }
      check_close(w, rw, 1e-5);
    }
  }
  kernels::select(kernels::cpu_has_avx2() && kernels::avx2_table() ? "avx2" : "scalar");
}

TEST_CASE("simd tables agree with scalar") {
  const KernelTable& ref = kernels::scalar_table();
  for (const KernelTable* t : kernels::available_tables()) {
    if (t == &ref) continue;
    CAPTURE(t->name);
    const int m = 37, n = 251, k = 99;
    const auto a = randoms(m * k, 5), b = randoms(k * n, 6);
    std::vector<float> c1(m * n), c2(m * n);
    ref.gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n, false);
    t->gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n, false);
    for (int i = 0; i < m * n; ++i) CHECK(c2[i] == doctest::Approx(c1[i]).epsilon(1e-4).scale(1.0));
    const auto x = randoms(1237, 7);
    std::vector<float> r1(1237), r2(1237);
    ref.relu_forward(x.data(), r1.data(), x.size());
    t->relu_forward(x.data(), r2.data(), x.size());
    CHECK(r1 == r2);
    ref.scale_shift(x.data(), r1.data(), x.size(), 0.3f, 0.1f);
    t->scale_shift(x.data(), r2.data(), x.size(), 0.3f, 0.1f);
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r2[i] == doctest::Approx(r1[i]).epsilon(1e-6));
  }
}

}  // TEST_SUITE
