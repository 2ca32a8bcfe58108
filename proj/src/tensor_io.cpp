#include "gma/tensor_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gma/rng.hpp"

namespace gma {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'A', 'T'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kDtypeF64 = 1;

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("GMAT: truncated u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(os, bits);
}

double get_f64(std::istream& is) {
    const uint64_t bits = get_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void write_gmat(std::ostream& os, const Tensor& t) {
    require_finite(t, "GMAT write");
    os.write(kMagic, 4);
    os.put(static_cast<char>(kVersion));
    os.put(static_cast<char>(kDtypeF64));
    os.put(static_cast<char>(t.rank()));
    for (int64_t d : t.shape) put_u64(os, static_cast<uint64_t>(d));
    for (double v : t.data) put_f64(os, v);
    if (!os) throw IoError("GMAT: write failed");
}

Tensor read_gmat(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("GMAT: bad magic");
    const int version = is.get();
    const int dtype = is.get();
    const int rank = is.get();
    if (!is) throw IoError("GMAT: truncated header");
    if (version != kVersion) throw IoError("GMAT: unsupported version " + std::to_string(version));
    if (dtype != kDtypeF64) throw IoError("GMAT: unsupported dtype " + std::to_string(dtype));
    if (rank < 0 || rank > 8) throw IoError("GMAT: implausible rank " + std::to_string(rank));
    std::vector<int64_t> dims(static_cast<size_t>(rank));
    for (auto& d : dims) {
        d = static_cast<int64_t>(get_u64(is));
        if (d <= 0) throw IoError("GMAT: non-positive dimension");
    }
    Tensor t(std::move(dims));
    for (double& v : t.data) v = get_f64(is);
    require_finite(t, "GMAT read");
    return t;
}

void write_gmat_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_gmat(os, t);
}

Tensor read_gmat_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_gmat(is);
}

void write_checkpoint(const std::string& path, const std::vector<const Parameter*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const Parameter* p : params) {
        put_u64(os, p->name.size());
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_gmat(os, p->value);
    }
    if (!os) throw IoError("checkpoint write failed: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    std::vector<std::pair<std::string, Tensor>> out;
    while (is.peek() != std::char_traits<char>::eof()) {
        const uint64_t len = get_u64(is);
        if (len > (1u << 20)) throw IoError("checkpoint: implausible name length");
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        if (!is) throw IoError("checkpoint: truncated name");
        out.emplace_back(std::move(name), read_gmat(is));
    }
    return out;
}

void write_csv_grid(const std::string& path, const Tensor& grid) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    const int64_t rows = grid.rank() == 2 ? grid.shape[0] : 1;
    const int64_t cols = grid.numel() / rows;
    char buf[40];
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", grid.data[r * cols + c]);
            os << (c ? "," : "") << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("csv write failed: " + path);
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        h = fnv1a64(buf, static_cast<size_t>(is.gcount()), h);
        if (is.eof()) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace gma
