#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gma/rng.hpp"
#include "gma/tensor_io.hpp"

using namespace gma;

namespace {

std::string temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "gma_serialize_test";
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("gmat round-trips bit-exactly, including awkward doubles") {
    SplitMix64 rng(61);
    Tensor t({3, 4, 2});
    for (double& v : t.data) v = rng.uniform(-1e12, 1e12) * 1e-7;
    t.data[0] = 0.1;  // not exactly representable
    t.data[1] = -0.0;
    t.data[2] = 4.9406564584124654e-324;  // subnormal

    std::stringstream buf;
    write_gmat(buf, t);
    const Tensor back = read_gmat(buf);
    CHECK(bit_equal(t, back));

    // scalars round-trip too
    std::stringstream buf2;
    write_gmat(buf2, Tensor::scalar(-1.25));
    const Tensor s = read_gmat(buf2);
    CHECK(s.rank() == 0);
    CHECK(s.data[0] == -1.25);
}

TEST_CASE("gmat write/read is byte-stable on disk") {
    const std::string dir = temp_dir();
    SplitMix64 rng(62);
    Tensor t({7, 7});
    for (double& v : t.data) v = rng.uniform(-1, 1);
    write_gmat_file(dir + "/a.gmat", t);
    write_gmat_file(dir + "/b.gmat", t);
    CHECK(read_bytes(dir + "/a.gmat") == read_bytes(dir + "/b.gmat"));
    CHECK(bit_equal(read_gmat_file(dir + "/a.gmat"), t));
    // header: magic + version + dtype + rank + 2 dims + payload
    CHECK(std::filesystem::file_size(dir + "/a.gmat") == 4 + 3 + 2 * 8 + 49 * 8);
}

TEST_CASE("gmat rejects corrupted headers") {
    std::stringstream buf;
    buf << "GMAX";
    CHECK_THROWS_AS(read_gmat(buf), IoError);

    std::stringstream buf2;
    write_gmat(buf2, Tensor({2}, {1, 2}));
    std::string bytes = buf2.str();
    bytes[4] = 9;  // version
    std::stringstream buf3(bytes);
    CHECK_THROWS_AS(read_gmat(buf3), IoError);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(read_gmat(truncated), IoError);
}

TEST_CASE("checkpoint container round-trips parameters in order") {
    const std::string path = temp_dir() + "/params.gmatc";
    SplitMix64 rng(63);
    Parameter a("alpha.weight", {3, 2});
    Parameter b("beta.bias", {5});
    Parameter c("gamma.scalar", {});
    for (double& v : a.value.data) v = rng.uniform(-2, 2);
    for (double& v : b.value.data) v = rng.uniform(-2, 2);
    c.value.data[0] = 0.125;

    write_checkpoint(path, {&a, &b, &c});
    auto records = read_checkpoint(path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].first == "alpha.weight");
    CHECK(bit_equal(records[0].second, a.value));
    CHECK(records[1].first == "beta.bias");
    CHECK(bit_equal(records[1].second, b.value));
    CHECK(records[2].first == "gamma.scalar");
    CHECK(bit_equal(records[2].second, c.value));

    // writing again produces identical bytes
    const std::string bytes1 = read_bytes(path);
    write_checkpoint(path, {&a, &b, &c});
    CHECK(read_bytes(path) == bytes1);
}

TEST_CASE("csv grid export carries full precision") {
    const std::string path = temp_dir() + "/grid.csv";
    Tensor t({2, 2}, {0.1, 1.0 / 3.0, -2.5e-17, 123456789.123456789});
    write_csv_grid(path, t);
    std::ifstream is(path);
    std::string line1, line2;
    std::getline(is, line1);
    std::getline(is, line2);
    double v00, v01, v10, v11;
    CHECK(std::sscanf(line1.c_str(), "%lf,%lf", &v00, &v01) == 2);
    CHECK(std::sscanf(line2.c_str(), "%lf,%lf", &v10, &v11) == 2);
    CHECK(v00 == 0.1);
    CHECK(v01 == 1.0 / 3.0);
    CHECK(v10 == -2.5e-17);
    CHECK(v11 == 123456789.123456789);
}

TEST_CASE("file hash is stable and content-sensitive") {
    const std::string dir = temp_dir();
    {
        std::ofstream os(dir + "/h1.bin", std::ios::binary);
        os << "abc";
    }
    {
        std::ofstream os(dir + "/h2.bin", std::ios::binary);
        os << "abd";
    }
    CHECK(file_hash_hex(dir + "/h1.bin") == file_hash_hex(dir + "/h1.bin"));
    CHECK(file_hash_hex(dir + "/h1.bin") != file_hash_hex(dir + "/h2.bin"));
    CHECK(file_hash_hex(dir + "/h1.bin").size() == 16);
}
