#include "edgeseg/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "edgeseg/error.hpp"

namespace edgeseg {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;
  std::string path;

  void need(std::size_t n) const {
    if (left < n) throw FormatError("truncated checkpoint: " + path);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

std::vector<int> logical_extents(const ParamRef<float>& r) {
  const Shape4& s = r.tensor->shape();
  if (r.logical_rank == 4) return {s.n, s.c, s.h, s.w};
  return {static_cast<int>(r.tensor->numel())};
}

}  // namespace

void save_checkpoint(NetworkGraph<float>& graph, const std::string& path) {
  std::vector<std::uint8_t> body;  // everything after the magic
  put_u32(body, kVersion);

  const std::string& cfg = graph.config_json();
  put_u32(body, static_cast<std::uint32_t>(cfg.size()));
  body.insert(body.end(), cfg.begin(), cfg.end());

  auto refs = graph.parameters();
  put_u32(body, static_cast<std::uint32_t>(refs.size()));
  for (const ParamRef<float>& r : refs) {
    put_u16(body, static_cast<std::uint16_t>(r.path.size()));
    body.insert(body.end(), r.path.begin(), r.path.end());
    auto extents = logical_extents(r);
    body.push_back(static_cast<std::uint8_t>(extents.size()));
    for (int e : extents) put_u32(body, static_cast<std::uint32_t>(e));
    const std::uint8_t* raw =
        reinterpret_cast<const std::uint8_t*>(r.tensor->data());
    body.insert(body.end(), raw,
                raw + sizeof(float) * static_cast<std::size_t>(
                                          r.tensor->numel()));
  }

  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0L, body.data(), static_cast<uInt>(body.size())));
  put_u32(body, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

NetworkGraph<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());

  if (file.size() < 4 + 4 + 4 || std::memcmp(file.data(), kMagic, 4) != 0)
    throw FormatError("not an ESEG checkpoint: " + path);

  const std::size_t body_len = file.size() - 4 - 4;
  const std::uint8_t* body = file.data() + 4;
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<std::uint32_t>(file[file.size() - 4 + i])
                  << (8 * i);
  const std::uint32_t actual_crc = static_cast<std::uint32_t>(
      crc32(0L, body, static_cast<uInt>(body_len)));
  if (stored_crc != actual_crc)
    throw CorruptionError("checkpoint CRC mismatch: " + path);

  Reader r{body, body_len, path};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError("unsupported checkpoint version " +
                       std::to_string(version) + ": " + path);

  const std::uint32_t cfg_len = r.u32();
  const std::string cfg_text = r.bytes(cfg_len);
  NetworkConfig config = config_from_json(cfg_text);
  NetworkGraph<float> graph = assemble_network<float>(config);

  auto refs = graph.parameters();
  const std::uint32_t count = r.u32();
  if (count != refs.size())
    throw ConsistencyError("checkpoint carries " + std::to_string(count) +
                           " tensors but the config expects " +
                           std::to_string(refs.size()));

  for (ParamRef<float>& ref : refs) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    if (name != ref.path)
      throw ConsistencyError("checkpoint tensor \"" + name +
                             "\" does not match expected parameter \"" +
                             ref.path + "\"");
    const int rank = r.u8();
    std::vector<int> extents(static_cast<std::size_t>(rank));
    std::int64_t numel = 1;
    for (int& e : extents) {
      e = static_cast<int>(r.u32());
      numel *= e;
    }
    auto want = logical_extents(ref);
    if (extents != want || numel != ref.tensor->numel())
      throw ConsistencyError("checkpoint tensor \"" + name +
                             "\" shape disagrees with the embedded config");
    r.need(sizeof(float) * static_cast<std::size_t>(numel));
    std::memcpy(ref.tensor->data(), r.p,
                sizeof(float) * static_cast<std::size_t>(numel));
    r.p += sizeof(float) * static_cast<std::size_t>(numel);
    r.left -= sizeof(float) * static_cast<std::size_t>(numel);
  }
  if (r.left != 0)
    throw FormatError("checkpoint has trailing bytes: " + path);
  return graph;
}

}  // namespace edgeseg
