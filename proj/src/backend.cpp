#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "prodlaw/backend.hpp"

#include <mutex>
#include <string>

#include "prodlaw/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace prodlaw::backend {

namespace {

void check(lapack_int info, const char* what) {
    if (info != 0)
        throw BackendFailure(std::string(what) + " failed with info = " + std::to_string(info));
}

} // namespace

void init() {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
}

std::vector<std::complex<double>> eigenvalues(const CMatrix& a) {
    init();
    const lapack_int n = static_cast<lapack_int>(a.rows());
    if (n == 0)
        return {};
    CMatrix work = a;
    std::vector<std::complex<double>> ev(n);
    check(LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, work.data(), n, ev.data(), nullptr, 1, nullptr, 1), "zgeev");
    return ev;
}

std::vector<double> hermitian_eigenvalues(const CMatrix& a) {
    init();
    const lapack_int n = static_cast<lapack_int>(a.rows());
    if (n == 0)
        return {};
    CMatrix work = a;
    std::vector<double> ev(n);
    check(LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', n, work.data(), n, ev.data()), "zheevd");
    return ev;
}

std::vector<double> singular_values(const CMatrix& a) {
    init();
    const lapack_int m = static_cast<lapack_int>(a.rows()), n = static_cast<lapack_int>(a.cols());
    CMatrix work = a;
    std::vector<double> s(std::min(m, n));
    check(LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n, work.data(), m, s.data(), nullptr, 1, nullptr, 1), "zgesdd");
    return s;
}

Svd svd(const CMatrix& a) {
    init();
    const lapack_int m = static_cast<lapack_int>(a.rows()), n = static_cast<lapack_int>(a.cols());
    CMatrix work = a;
    Svd out;
    out.s.resize(std::min(m, n));
    out.U.resize(m, m);
    CMatrix vt(n, n);
    check(LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'A', m, n, work.data(), m, out.s.data(), out.U.data(), m, vt.data(), n),
          "zgesdd");
    out.V = vt.adjoint();
    return out;
}

} // namespace prodlaw::backend
