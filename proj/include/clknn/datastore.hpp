#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clknn/common.hpp"

namespace clknn {

struct AdapterParams;

struct Entry {
    std::vector<float> key;
    std::uint32_t token = 0;
};

/// Ordered collection of (context vector, token id) pairs. Keys are held as
/// float32 exactly as they are persisted; downstream math widens to double.
/// Immutable once built, safe for concurrent reads.
class Datastore {
public:
    Datastore() = default;
    Datastore(std::uint32_t dim, std::uint32_t vocab_size);

    void reserve(std::size_t n);
    void push_back(std::span<const float> key, std::uint32_t token);

    std::uint32_t dim() const noexcept { return dim_; }
    std::uint32_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }

    std::span<const float> key(std::size_t i) const;
    Vec key_f64(std::size_t i) const;
    std::uint32_t token(std::size_t i) const { return tokens_[i]; }

    std::span<const float> raw_keys() const noexcept { return keys_; }
    std::span<const std::uint32_t> raw_tokens() const noexcept { return tokens_; }

    // Per-entry read counters backing the sampling-cost assertions.
    // Tracking is single-threaded instrumentation; off by default.
    void enable_access_tracking() const;
    const std::vector<std::uint64_t>& access_counts() const { return access_counts_; }

    bool operator==(const Datastore& other) const;

private:
    std::uint32_t dim_ = 0;
    std::uint32_t vocab_size_ = 0;
    std::vector<float> keys_;
    std::vector<std::uint32_t> tokens_;
    mutable bool track_access_ = false;
    mutable std::vector<std::uint64_t> access_counts_;
};

/// Vocabulary-defined partition of a datastore: per-token member lists plus
/// the per-token mean key (no center for empty clusters).
struct ClusterIndex {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> entry_tokens;
    std::vector<std::vector<std::uint32_t>> members;
    std::vector<Vec> centers;
    std::vector<std::uint32_t> nonempty_tokens;

    bool has_center(std::uint32_t v) const { return !centers[v].empty(); }
    std::size_t cluster_size(std::uint32_t v) const { return members[v].size(); }
};

Datastore build_datastore(std::span<const Entry> pairs, std::uint32_t dim,
                          std::uint32_t vocab_size);

ClusterIndex partition_clusters(const Datastore& ds);

// Recompute centers from externally supplied vectors (row-major count*dim),
// e.g. the evolving adapter output space during training. Membership is
// label-defined and never changes.
void refresh_centers(ClusterIndex& ci, std::span<const double> keys, std::uint32_t dim);

// Maps every key through the adapter; tokens and order preserved.
Datastore transform_datastore(const Datastore& ds, const AdapterParams& params);

void save_datastore(const Datastore& ds, const std::filesystem::path& path);
Datastore load_datastore(const std::filesystem::path& path);

// Serialized size in bytes for a store of `count` entries of width `dim`.
std::uint64_t datastore_file_size(std::uint64_t count, std::uint32_t dim);

} // namespace clknn
