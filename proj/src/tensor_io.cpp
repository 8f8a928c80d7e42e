#include "hydra/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hydra {

namespace {

static_assert(sizeof(float) == 4);

void put_u32(std::string& out, uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
    Tensor::count(t.dims);  // validates rank
    std::string out = "HYDT";
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<char>(t.rank()));
    for (auto d : t.dims) put_u32(out, d);
    out.reserve(out.size() + 4 * t.size());
    for (float f : t.data) put_u32(out, std::bit_cast<uint32_t>(f));
    return out;
}

Tensor decode_tensor(const std::string& bytes, const std::string& where) {
    auto p = reinterpret_cast<const unsigned char*>(bytes.data());
    size_t n = bytes.size();
    if (n < 4 || std::memcmp(p, "HYDT", 4) != 0) {
        if (n < 4 && std::memcmp(p, "HYDT", n) == 0)
            throw HydtError(HydtErrorKind::Truncated, where + ": truncated header");
        throw HydtError(HydtErrorKind::BadMagic, where + ": bad magic");
    }
    if (n < 7) throw HydtError(HydtErrorKind::Truncated, where + ": truncated header");
    if (p[4] != 1) throw HydtError(HydtErrorKind::UnsupportedVersion, where + ": unsupported version " + std::to_string(p[4]));
    if (p[5] != 0) throw HydtError(HydtErrorKind::UnsupportedDtype, where + ": unsupported dtype " + std::to_string(p[5]));
    size_t rank = p[6];
    if (rank < 1 || rank > 4) throw HydtError(HydtErrorKind::BadRank, where + ": bad rank " + std::to_string(rank));
    size_t off = 7;
    if (n < off + 4 * rank) throw HydtError(HydtErrorKind::Truncated, where + ": truncated dims");
    std::vector<uint32_t> dims(rank);
    for (size_t i = 0; i < rank; ++i, off += 4) dims[i] = get_u32(p + off);
    size_t count = Tensor::count(dims);
    if ((n - off) / 4 < count || n - off < 4 * count)
        throw HydtError(HydtErrorKind::Truncated, where + ": truncated payload");
    if (n - off != 4 * count) throw HydtError(HydtErrorKind::TrailingBytes, where + ": bytes after the payload");
    std::vector<float> data(count);
    for (size_t i = 0; i < count; ++i, off += 4) data[i] = std::bit_cast<float>(get_u32(p + off));
    return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const std::string& path, const Tensor& t) {
    std::string bytes = encode_tensor(t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw HydtError(HydtErrorKind::Io, path + ": cannot open for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw HydtError(HydtErrorKind::Io, path + ": write failed");
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw HydtError(HydtErrorKind::Io, path + ": cannot open for reading");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_tensor(ss.str(), path);
}

}  // namespace hydra
