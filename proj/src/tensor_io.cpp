#include "aop/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "aop/errors.hpp"

namespace aop {

namespace le {

namespace {
template <typename T>
void put(std::ostream& out, T v) {
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    out.write(buf.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    std::array<char, sizeof(T)> buf;
    if (!in.read(buf.data(), sizeof(T))) throw FormatError("truncated data");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
}
} // namespace

void put_u8(std::ostream& out, std::uint8_t v) { put(out, v); }
void put_u16(std::ostream& out, std::uint16_t v) { put(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void put_f32(std::ostream& out, float v) { put(out, v); }
std::uint8_t get_u8(std::istream& in) { return get<std::uint8_t>(in); }
std::uint16_t get_u16(std::istream& in) { return get<std::uint16_t>(in); }
std::uint32_t get_u32(std::istream& in) { return get<std::uint32_t>(in); }
float get_f32(std::istream& in) { return get<float>(in); }

} // namespace le

void write_tensor(std::ostream& out, const Tensor& t) {
    if (t.ndim() > 255) throw DimensionError("too many dimensions for AOPT");
    out.write(kTensorMagic, 4);
    le::put_u8(out, kTensorVersion);
    le::put_u8(out, static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t d : t.shape()) {
        if (d > 0xffffffffu) throw DimensionError("dimension exceeds u32");
        le::put_u32(out, static_cast<std::uint32_t>(d));
    }
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.bytes()));
    } else {
        for (float v : t.data()) le::put_f32(out, v);
    }
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4)) throw FormatError("truncated tensor header");
    if (std::memcmp(magic, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
    const std::uint8_t version = le::get_u8(in);
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor version " + std::to_string(version));
    }
    const std::uint8_t ndim = le::get_u8(in);
    Shape shape(ndim);
    for (auto& d : shape) d = le::get_u32(in);
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d != 0 && n > (std::size_t{1} << 40) / d) throw FormatError("tensor shape " + shape_str(shape) + " is too large");
        n *= d;
    }
    // Bound the allocation by what the stream can actually deliver.
    const auto here = in.tellg();
    if (here != std::streampos(-1)) {
        in.seekg(0, std::ios::end);
        const auto end = in.tellg();
        in.seekg(here);
        if (static_cast<std::size_t>(end - here) / sizeof(float) < n) {
            throw FormatError("truncated tensor payload for shape " + shape_str(shape));
        }
    }
    Tensor t(shape);
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.bytes()))) {
            throw FormatError("truncated tensor payload for shape " + shape_str(shape));
        }
    } else {
        for (auto& v : t.data()) v = le::get_f32(in);
    }
    return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_tensor(out, t);
    if (!out) throw FormatError("failed writing " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    std::ostringstream os(std::ios::binary);
    write_tensor(os, t);
    const std::string s = os.str();
    return {s.begin(), s.end()};
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
    return read_tensor(is);
}

} // namespace aop
