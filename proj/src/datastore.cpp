#include "clknn/datastore.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "clknn/adapter.hpp"

static_assert(std::endian::native == std::endian::little,
              "datastore files are little-endian; big-endian hosts are unsupported");

namespace clknn {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'K', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorKind::io, std::string("truncated datastore file while reading ") + what);
}

} // namespace

Datastore::Datastore(std::uint32_t dim, std::uint32_t vocab_size)
    : dim_(dim), vocab_size_(vocab_size) {
    if (dim == 0) throw Error(ErrorKind::dimension, "datastore dim must be positive");
    if (vocab_size == 0) throw Error(ErrorKind::config, "vocab_size must be positive");
}

void Datastore::reserve(std::size_t n) {
    keys_.reserve(n * dim_);
    tokens_.reserve(n);
}

void Datastore::push_back(std::span<const float> key, std::uint32_t token) {
    if (key.size() != dim_)
        throw Error(ErrorKind::dimension, "entry key length does not match datastore dim");
    if (token >= vocab_size_)
        throw Error(ErrorKind::contract, "token id out of range");
    for (float x : key)
        if (!std::isfinite(x))
            throw Error(ErrorKind::contract, "non-finite key component");
    keys_.insert(keys_.end(), key.begin(), key.end());
    tokens_.push_back(token);
}

std::span<const float> Datastore::key(std::size_t i) const {
    if (track_access_) ++access_counts_[i];
    return std::span<const float>(keys_.data() + i * dim_, dim_);
}

Vec Datastore::key_f64(std::size_t i) const {
    const auto k = key(i);
    return Vec(k.begin(), k.end());
}

void Datastore::enable_access_tracking() const {
    track_access_ = true;
    access_counts_.assign(size(), 0);
}

bool Datastore::operator==(const Datastore& other) const {
    if (dim_ != other.dim_ || vocab_size_ != other.vocab_size_ || tokens_ != other.tokens_)
        return false;
    // bit-exact key comparison (NaN-free by construction)
    return keys_.size() == other.keys_.size() &&
           std::memcmp(keys_.data(), other.keys_.data(), keys_.size() * sizeof(float)) == 0;
}

Datastore build_datastore(std::span<const Entry> pairs, std::uint32_t dim,
                          std::uint32_t vocab_size) {
    Datastore ds(dim, vocab_size);
    ds.reserve(pairs.size());
    for (const Entry& e : pairs)
        ds.push_back(e.key, e.token);
    return ds;
}

ClusterIndex partition_clusters(const Datastore& ds) {
    if (ds.empty()) throw Error(ErrorKind::contract, "cannot partition an empty datastore");
    ClusterIndex ci;
    ci.dim = ds.dim();
    ci.entry_tokens.assign(ds.raw_tokens().begin(), ds.raw_tokens().end());
    ci.members.resize(ds.vocab_size());
    for (std::uint32_t i = 0; i < ds.size(); ++i)
        ci.members[ds.token(i)].push_back(i);

    ci.centers.resize(ds.vocab_size());
    for (std::uint32_t v = 0; v < ds.vocab_size(); ++v) {
        if (ci.members[v].empty()) continue;
        ci.nonempty_tokens.push_back(v);
        Vec c(ds.dim(), 0.0);
        for (std::uint32_t idx : ci.members[v]) {
            const auto k = ds.key(idx);
            for (std::uint32_t j = 0; j < ds.dim(); ++j) c[j] += k[j];
        }
        const double inv = 1.0 / static_cast<double>(ci.members[v].size());
        for (double& x : c) x *= inv;
        ci.centers[v] = std::move(c);
    }
    return ci;
}

void refresh_centers(ClusterIndex& ci, std::span<const double> keys, std::uint32_t dim) {
    if (keys.size() != ci.entry_tokens.size() * static_cast<std::size_t>(dim))
        throw Error(ErrorKind::dimension, "refresh_centers: key matrix shape mismatch");
    ci.dim = dim;
    for (std::uint32_t v : ci.nonempty_tokens) {
        Vec c(dim, 0.0);
        for (std::uint32_t idx : ci.members[v]) {
            const double* k = keys.data() + static_cast<std::size_t>(idx) * dim;
            for (std::uint32_t j = 0; j < dim; ++j) c[j] += k[j];
        }
        const double inv = 1.0 / static_cast<double>(ci.members[v].size());
        for (double& x : c) x *= inv;
        ci.centers[v] = std::move(c);
    }
}

Datastore transform_datastore(const Datastore& ds, const AdapterParams& params) {
    if (ds.dim() != params.d)
        throw Error(ErrorKind::dimension, "datastore dim does not match adapter input width");
    Datastore out(params.d_o, ds.vocab_size());
    out.reserve(ds.size());
    std::vector<float> row(params.d_o);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vec z = ffn_forward(ds.key_f64(i), params);
        for (std::uint32_t j = 0; j < params.d_o; ++j) row[j] = static_cast<float>(z[j]);
        out.push_back(row, ds.token(i));
    }
    return out;
}

std::uint64_t datastore_file_size(std::uint64_t count, std::uint32_t dim) {
    // magic + version + count + dim + vocab_size, then keys and token ids
    return 4 + 4 + 8 + 4 + 4 + count * (std::uint64_t(dim) * 4 + 4);
}

void save_datastore(const Datastore& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    const std::uint64_t count = ds.size();
    const std::uint32_t dim = ds.dim(), vocab = ds.vocab_size();
    write_bytes(out, kMagic, 4);
    write_bytes(out, &kVersion, 4);
    write_bytes(out, &count, 8);
    write_bytes(out, &dim, 4);
    write_bytes(out, &vocab, 4);
    write_bytes(out, ds.raw_keys().data(), ds.raw_keys().size() * sizeof(float));
    write_bytes(out, ds.raw_tokens().data(), ds.raw_tokens().size() * sizeof(std::uint32_t));
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

Datastore load_datastore(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open datastore file " + path.string());
    char magic[4];
    read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorKind::io, "bad magic in " + path.string());
    std::uint32_t version = 0;
    read_bytes(in, &version, 4, "version");
    if (version != kVersion)
        throw Error(ErrorKind::io, "unsupported datastore version " + std::to_string(version));
    std::uint64_t count = 0;
    std::uint32_t dim = 0, vocab = 0;
    read_bytes(in, &count, 8, "count");
    read_bytes(in, &dim, 4, "dim");
    read_bytes(in, &vocab, 4, "vocab_size");
    if (dim == 0 || vocab == 0)
        throw Error(ErrorKind::io, "corrupt datastore header in " + path.string());
    std::error_code ec;
    const auto actual_size = std::filesystem::file_size(path, ec);
    if (ec || actual_size != datastore_file_size(count, dim))
        throw Error(ErrorKind::io, "truncated datastore file " + path.string());

    Datastore ds(dim, vocab);
    ds.reserve(count);
    std::vector<float> keys(count * std::uint64_t(dim));
    std::vector<std::uint32_t> tokens(count);
    if (count > 0) {
        read_bytes(in, keys.data(), keys.size() * sizeof(float), "keys");
        read_bytes(in, tokens.data(), tokens.size() * sizeof(std::uint32_t), "tokens");
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        if (tokens[i] >= vocab)
            throw Error(ErrorKind::io, "corrupt datastore: token id out of range");
        ds.push_back(std::span<const float>(keys.data() + i * dim, dim), tokens[i]);
    }
    return ds;
}

} // namespace clknn
