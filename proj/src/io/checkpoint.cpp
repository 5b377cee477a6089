#include "mmbeam/io/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "mmbeam/common.hpp"
#include "mmbeam/io/tensor_file.hpp"

namespace mmbeam::io {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'B', 'C'};
constexpr std::uint8_t kVersion = 1;
constexpr std::string_view kSeparator = "--- config ---\n";

}  // namespace

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

std::string Checkpoint::metadata() const {
  std::ostringstream os;
  os << "step=" << step << '\n'
     << "epoch=" << epoch << '\n'
     << "ema=" << (ema.empty() ? 0 : 1) << '\n'
     << "config_hash=" << config_hash(config_text) << '\n'
     << kSeparator << config_text;
  return os.str();
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::string out(kMagic, 4);
  put_u8(out, kVersion);
  const std::string meta = ck.metadata();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(ck.raw.size() + ck.ema.size()));
  auto put_entry = [&](const std::string& name, const ad::Tensor<float>& t) {
    if (name.size() > 0xFFFF) throw ArgumentError("checkpoint entry name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out += encode_tensor(t);
  };
  for (const auto& [name, t] : ck.raw) put_entry("raw/" + name, t);
  for (const auto& [name, t] : ck.ema) put_entry("ema/" + name, t);
  write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const std::string bytes = read_file(path);
  const std::string_view in = bytes;
  try {
    std::size_t off = 0;
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw DataError("bad checkpoint magic");
    off = 4;
    if (get_u8(in, off) != kVersion) throw DataError("unsupported checkpoint version");
    const std::uint32_t meta_len = get_u32(in, off);
    if (off + meta_len > in.size()) throw DataError("metadata truncated");
    const std::string meta(in.substr(off, meta_len));
    off += meta_len;

    Checkpoint ck;
    const std::size_t sep = meta.find(kSeparator);
    if (sep == std::string::npos) throw DataError("metadata lacks the config separator");
    ck.config_text = meta.substr(sep + kSeparator.size());
    std::istringstream head(meta.substr(0, sep));
    std::string line, hash;
    bool ema_flag = false;
    while (std::getline(head, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw DataError("bad metadata line '" + line + "'");
      const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
      if (k == "step") ck.step = std::stoull(v);
      else if (k == "epoch") ck.epoch = std::stoi(v);
      else if (k == "ema") ema_flag = v == "1";
      else if (k == "config_hash") hash = v;
      else throw DataError("unknown metadata key '" + k + "'");
    }
    if (hash != config_hash(ck.config_text)) throw DataError("config hash mismatch");

    const std::uint32_t n = get_u32(in, off);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint16_t len = get_u16(in, off);
      if (off + len > in.size()) throw DataError("entry name truncated");
      const std::string name(in.substr(off, len));
      off += len;
      AnyTensor t = decode_tensor(in, off);
      if (t.dtype != DType::F32) throw DataError("checkpoint entries must be 32-bit floats");
      if (name.rfind("raw/", 0) == 0) ck.raw.emplace(name.substr(4), std::move(t.f32));
      else if (name.rfind("ema/", 0) == 0) ck.ema.emplace(name.substr(4), std::move(t.f32));
      else throw DataError("unknown entry prefix in '" + name + "'");
    }
    if (off != in.size()) throw DataError("trailing bytes");
    if (ema_flag != !ck.ema.empty()) throw DataError("EMA flag disagrees with the stored entries");
    return ck;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw DataError(path.string() + ": malformed metadata (" + e.what() + ")");
  }
}

}  // namespace mmbeam::io
