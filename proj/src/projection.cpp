#include "clknn/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace clknn {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

// Cyclic Jacobi eigendecomposition of a symmetric n x n matrix (row-major,
// destroyed). Eigenvectors come back as columns of `vecs`.
void jacobi_eigh(std::vector<double>& a, std::size_t n, Vec& vals, std::vector<double>& vecs) {
    vecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a[i * n + j]));
    if (scale == 0.0) scale = 1.0;

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (std::sqrt(off) <= 1e-15 * scale * double(n)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) <= 1e-18 * scale) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                a[p * n + p] -= t * apq;
                a[q * n + q] += t * apq;
                a[p * n + q] = a[q * n + p] = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = a[p * n + i] = aip - s * (aiq + tau * aip);
                    a[i * n + q] = a[q * n + i] = aiq + s * (aip - tau * aiq);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = vecs[i * n + p], viq = vecs[i * n + q];
                    vecs[i * n + p] = vip - s * (viq + tau * vip);
                    vecs[i * n + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    vals.resize(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = a[i * n + i];
}

} // namespace

PcaModel fit_pca(std::span<const double> data, std::uint32_t dim, std::uint32_t p) {
    if (dim == 0 || data.size() % dim != 0)
        throw Error(ErrorKind::dimension, "fit_pca: data is not a multiple of dim");
    const std::size_t count = data.size() / dim;
    if (count < 2) throw Error(ErrorKind::contract, "fit_pca needs at least 2 samples");
    if (p == 0 || p > dim)
        throw Error(ErrorKind::dimension, "fit_pca: output dim must be in [1, dim]");

    PcaModel m;
    m.input_dim = dim;
    m.output_dim = p;
    m.mean.assign(dim, 0.0);
    for (std::size_t i = 0; i < count; ++i)
        for (std::uint32_t j = 0; j < dim; ++j) m.mean[j] += data[i * dim + j];
    for (double& x : m.mean) x /= double(count);

    // sample covariance (1/(n-1))
    std::vector<double> cov(std::size_t(dim) * dim, 0.0);
    Vec centered(dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::uint32_t j = 0; j < dim; ++j) centered[j] = data[i * dim + j] - m.mean[j];
        for (std::uint32_t j = 0; j < dim; ++j) {
            const double cj = centered[j];
            if (cj == 0.0) continue;
            for (std::uint32_t k = j; k < dim; ++k) cov[j * dim + k] += cj * centered[k];
        }
    }
    const double inv = 1.0 / double(count - 1);
    for (std::uint32_t j = 0; j < dim; ++j)
        for (std::uint32_t k = j; k < dim; ++k)
            cov[k * dim + j] = cov[j * dim + k] = cov[j * dim + k] * inv;

    Vec vals;
    std::vector<double> vecs;
    jacobi_eigh(cov, dim, vals, vecs);

    std::vector<std::uint32_t> order(dim);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&vals](std::uint32_t a, std::uint32_t b) { return vals[a] > vals[b]; });

    m.components.resize(std::size_t(p) * dim);
    m.explained_variance.resize(p);
    for (std::uint32_t r = 0; r < p; ++r) {
        const std::uint32_t col = order[r];
        m.explained_variance[r] = std::max(vals[col], 0.0);
        double* row = m.components.data() + std::size_t(r) * dim;
        for (std::uint32_t j = 0; j < dim; ++j) row[j] = vecs[std::size_t(j) * dim + col];
        // deterministic sign: largest-magnitude coordinate is positive
        std::uint32_t arg = 0;
        for (std::uint32_t j = 1; j < dim; ++j)
            if (std::abs(row[j]) > std::abs(row[arg])) arg = j;
        if (row[arg] < 0.0)
            for (std::uint32_t j = 0; j < dim; ++j) row[j] = -row[j];
    }
    return m;
}

PcaModel fit_pca(const Datastore& ds, std::uint32_t p) {
    if (ds.size() < 2) throw Error(ErrorKind::contract, "fit_pca needs at least 2 samples");
    std::vector<double> data(ds.raw_keys().begin(), ds.raw_keys().end());
    return fit_pca(data, ds.dim(), p);
}

Vec project(std::span<const double> x, const PcaModel& m) {
    if (x.size() != m.input_dim)
        throw Error(ErrorKind::dimension, "project: input width does not match PCA model");
    Vec y(m.output_dim, 0.0);
    for (std::uint32_t r = 0; r < m.output_dim; ++r) {
        const double* row = m.components.data() + std::size_t(r) * m.input_dim;
        double acc = 0.0;
        for (std::uint32_t j = 0; j < m.input_dim; ++j) acc += row[j] * (x[j] - m.mean[j]);
        y[r] = acc;
    }
    return y;
}

Vec project_normalize(std::span<const double> x, const PcaModel& m) {
    Vec y = project(x, m);
    double n2 = 0.0;
    for (double v : y) n2 += v * v;
    const double n = std::sqrt(n2);
    if (n < 1e-12) throw Error(ErrorKind::contract, "degenerate projection");
    for (double& v : y) v /= n;
    return y;
}

Datastore project_datastore(const Datastore& ds, const PcaModel& m) {
    if (ds.dim() != m.input_dim)
        throw Error(ErrorKind::dimension, "datastore dim does not match PCA input dim");
    Datastore out(m.output_dim, ds.vocab_size());
    out.reserve(ds.size());
    std::vector<float> row(m.output_dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vec g = project_normalize(ds.key_f64(i), m);
        for (std::uint32_t j = 0; j < m.output_dim; ++j) row[j] = static_cast<float>(g[j]);
        out.push_back(row, ds.token(i));
    }
    return out;
}

void save_pca(const PcaModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), 4);
    out.write(reinterpret_cast<const char*>(&m.input_dim), 4);
    out.write(reinterpret_cast<const char*>(&m.output_dim), 4);
    auto dump = [&out](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    dump(m.mean);
    dump(m.components);
    dump(m.explained_variance);
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

PcaModel load_pca(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open PCA file " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorKind::io, "bad magic in " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kVersion)
        throw Error(ErrorKind::io, "unsupported PCA version in " + path.string());
    PcaModel m;
    in.read(reinterpret_cast<char*>(&m.input_dim), 4);
    in.read(reinterpret_cast<char*>(&m.output_dim), 4);
    if (!in || m.input_dim == 0 || m.output_dim == 0 || m.output_dim > m.input_dim)
        throw Error(ErrorKind::io, "corrupt PCA header in " + path.string());
    auto slurp = [&in, &path](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
            throw Error(ErrorKind::io, "truncated PCA file " + path.string());
    };
    slurp(m.mean, m.input_dim);
    slurp(m.components, std::size_t(m.output_dim) * m.input_dim);
    slurp(m.explained_variance, m.output_dim);
    return m;
}

} // namespace clknn
