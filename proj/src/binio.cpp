#include "nestar/binio.hpp"

#include <zlib.h>

#include <filesystem>
#include <fstream>

namespace nestar {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::file_not_found, "cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    require(!in.bad(), ErrorKind::io, "read failed for '" + path + "'");
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

uint32_t crc32_ieee(const uint8_t* data, size_t size, uint32_t seed) {
    return static_cast<uint32_t>(crc32(seed, data, static_cast<uInt>(size)));
}

}  // namespace nestar
