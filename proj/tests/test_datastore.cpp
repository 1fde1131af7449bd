#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "clknn/adapter.hpp"
#include "clknn/datastore.hpp"
#include "clknn/rng.hpp"
#include "oracles.hpp"

using namespace clknn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / (std::string("clknn_test_") + name);
}

Datastore random_store(std::size_t count, std::uint32_t dim, std::uint32_t vocab,
                       std::uint64_t seed) {
    Rng rng(seed);
    Datastore ds(dim, vocab);
    ds.reserve(count);
    std::vector<float> key(dim);
    for (std::size_t i = 0; i < count; ++i) {
        for (auto& x : key) x = static_cast<float>(rng.next_gaussian());
        ds.push_back(key, static_cast<std::uint32_t>(rng.uniform_index(vocab)));
    }
    return ds;
}

} // namespace

TEST_CASE("build_datastore: empty and single entry") {
    const Datastore empty = build_datastore({}, 4, 10);
    CHECK(empty.size() == 0);
    CHECK(empty.dim() == 4);

    std::vector<Entry> one = {{{1.0f, 0.0f}, 3}};
    const Datastore ds = build_datastore(one, 2, 5);
    REQUIRE(ds.size() == 1);
    CHECK(ds.key(0)[0] == 1.0f);
    CHECK(ds.key(0)[1] == 0.0f);
    CHECK(ds.token(0) == 3);
}

TEST_CASE("build_datastore rejects bad input") {
    std::vector<Entry> wrong_dim = {{{1.0f, 2.0f, 3.0f}, 0}};
    CHECK_THROWS_AS(build_datastore(wrong_dim, 2, 5), Error);

    std::vector<Entry> bad_token = {{{1.0f, 2.0f}, 7}};
    CHECK_THROWS_AS(build_datastore(bad_token, 2, 5), Error);

    std::vector<Entry> nan_key = {{{1.0f, std::nanf("")}, 0}};
    CHECK_THROWS_AS(build_datastore(nan_key, 2, 5), Error);
}

TEST_CASE("partition_clusters: singleton and two-point clusters") {
    std::vector<Entry> entries = {{{5.0f, -1.0f}, 2}};
    const auto ci1 = partition_clusters(build_datastore(entries, 2, 4));
    REQUIRE(ci1.members[2] == std::vector<std::uint32_t>{0});
    CHECK(ci1.centers[2][0] == doctest::Approx(5.0));
    CHECK(ci1.centers[2][1] == doctest::Approx(-1.0));
    CHECK(ci1.nonempty_tokens == std::vector<std::uint32_t>{2});
    CHECK_FALSE(ci1.has_center(0));

    std::vector<Entry> two = {{{0.0f, 0.0f}, 7}, {{2.0f, 2.0f}, 7}};
    const auto ci2 = partition_clusters(build_datastore(two, 2, 8));
    CHECK(ci2.centers[7][0] == doctest::Approx(1.0));
    CHECK(ci2.centers[7][1] == doctest::Approx(1.0));
}

TEST_CASE("partition_clusters matches brute-force means and partitions exactly") {
    const Datastore ds = random_store(1000, 8, 20, 99);
    const ClusterIndex ci = partition_clusters(ds);

    const auto means = oracle::per_token_means(ds);
    std::size_t total = 0;
    std::vector<bool> seen(ds.size(), false);
    for (std::uint32_t v = 0; v < ds.vocab_size(); ++v) {
        total += ci.members[v].size();
        for (std::uint32_t idx : ci.members[v]) {
            CHECK(ds.token(idx) == v);
            CHECK_FALSE(seen[idx]);
            seen[idx] = true;
        }
        if (ci.members[v].empty()) {
            CHECK(ci.centers[v].empty());
            continue;
        }
        REQUIRE(ci.centers[v].size() == ds.dim());
        for (std::uint32_t j = 0; j < ds.dim(); ++j)
            CHECK(ci.centers[v][j] == doctest::Approx(means[v][j]).epsilon(1e-9));
    }
    CHECK(total == ds.size());
}

TEST_CASE("center linearity: scaling keys by 2 scales centers by 2") {
    const Datastore ds = random_store(300, 6, 10, 7);
    Datastore scaled(ds.dim(), ds.vocab_size());
    std::vector<float> key(ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto k = ds.key(i);
        for (std::uint32_t j = 0; j < ds.dim(); ++j) key[j] = 2.0f * k[j];
        scaled.push_back(key, ds.token(i));
    }
    const auto ci = partition_clusters(ds);
    const auto ci2 = partition_clusters(scaled);
    for (std::uint32_t v : ci.nonempty_tokens)
        for (std::uint32_t j = 0; j < ds.dim(); ++j)
            CHECK(ci2.centers[v][j] == doctest::Approx(2.0 * ci.centers[v][j]).epsilon(1e-9));
}

TEST_CASE("transform_datastore: constant map, identity-like adapter, token invariance") {
    const Datastore ds = random_store(50, 2, 5, 3);

    AdapterParams zero;
    zero.d = 2;
    zero.d_f = 3;
    zero.d_o = 2;
    zero.w1.assign(6, 0.0);
    zero.b1.assign(3, 0.0);
    zero.w2.assign(6, 0.0);
    zero.b2 = {0.5, -0.5};
    const Datastore out = transform_datastore(ds, zero);
    REQUIRE(out.size() == ds.size());
    CHECK(out.dim() == 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out.key(i)[0] == 0.5f);
        CHECK(out.key(i)[1] == -0.5f);
        CHECK(out.token(i) == ds.token(i));
    }

    // identity via a large positive bias shifted off after the ReLU:
    // hidden = ReLU(h + B) = h + B for B large, output = hidden - B = h
    const double big = 64.0;
    AdapterParams ident;
    ident.d = 2;
    ident.d_f = 2;
    ident.d_o = 2;
    ident.w1 = {1.0, 0.0, 0.0, 1.0};
    ident.b1 = {big, big};
    ident.w2 = {1.0, 0.0, 0.0, 1.0};
    ident.b2 = {-big, -big};
    const Datastore same = transform_datastore(ds, ident);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::uint32_t j = 0; j < 2; ++j)
            CHECK(double(same.key(i)[j]) == doctest::Approx(double(ds.key(i)[j])).epsilon(1e-6));
}

TEST_CASE("save/load round trip is exact") {
    const Datastore ds = random_store(3, 4, 6, 11);
    const auto path = temp_file("roundtrip.clkn");
    save_datastore(ds, path);
    const Datastore back = load_datastore(path);
    CHECK(ds == back);
    fs::remove(path);
}

TEST_CASE("save/load: 10k random keys reproduce every byte") {
    const Datastore ds = random_store(10000, 32, 64, 123);
    const auto path = temp_file("bytes.clkn");
    save_datastore(ds, path);
    const Datastore back = load_datastore(path);
    REQUIRE(back.size() == ds.size());
    const auto a = ds.raw_keys(), b = back.raw_keys();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    CHECK(ds == back);
    fs::remove(path);
}

TEST_CASE("load_datastore error paths") {
    const auto path = temp_file("corrupt.clkn");
    save_datastore(random_store(5, 3, 4, 1), path);

    SUBCASE("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
        f.close();
        try {
            load_datastore(path);
            FAIL("expected bad-magic error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
            CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
        }
    }
    SUBCASE("truncated") {
        fs::resize_file(path, fs::file_size(path) - 7);
        try {
            load_datastore(path);
            FAIL("expected truncation error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::io);
        }
    }
    SUBCASE("version mismatch") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const std::uint32_t bad = 999;
        f.write(reinterpret_cast<const char*>(&bad), 4);
        f.close();
        CHECK_THROWS_AS(load_datastore(path), Error);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_datastore(temp_file("does_not_exist.clkn")), Error);
    }
    fs::remove(path);
}

TEST_CASE("file size follows the format arithmetic") {
    // header: magic(4) + version(4) + count(8) + dim(4) + vocab(4)
    CHECK(datastore_file_size(1000000, 128) == 24 + 1000000ull * (128 * 4 + 4));

    const Datastore ds = random_store(2048, 16, 32, 5);
    const auto path = temp_file("size.clkn");
    save_datastore(ds, path);
    CHECK(fs::file_size(path) == datastore_file_size(2048, 16));
    CHECK(fs::file_size(path) == 24 + 2048ull * (16 * 4 + 4));
    fs::remove(path);
}
