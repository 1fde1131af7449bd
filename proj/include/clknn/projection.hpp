#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clknn/common.hpp"
#include "clknn/datastore.hpp"

namespace clknn {

/// PCA model for g(x) = Norm(PCA(x)): sample mean plus the top principal
/// directions (rows, orthonormal) with their eigenvalues in non-increasing
/// order.
struct PcaModel {
    std::uint32_t input_dim = 0;
    std::uint32_t output_dim = 0;
    Vec mean;
    std::vector<double> components; // output_dim x input_dim, row-major
    Vec explained_variance;
};

// Fit on `count` row-major vectors of width `dim`; needs count >= 2, p <= dim.
PcaModel fit_pca(std::span<const double> data, std::uint32_t dim, std::uint32_t p);
PcaModel fit_pca(const Datastore& ds, std::uint32_t p);

// Centered projection onto the principal directions.
Vec project(std::span<const double> x, const PcaModel& m);

// g(x): unit-normalized projection; errors when the projection is degenerate
// (norm below 1e-12).
Vec project_normalize(std::span<const double> x, const PcaModel& m);

// Applies g to every key; tokens and order preserved.
Datastore project_datastore(const Datastore& ds, const PcaModel& m);

void save_pca(const PcaModel& m, const std::filesystem::path& path);
PcaModel load_pca(const std::filesystem::path& path);

} // namespace clknn
