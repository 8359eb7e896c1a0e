#include "m2s/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "m2s/errors.hpp"

namespace m2s {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path.string() + ": truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_bytes(std::istream& in, std::uint32_t n, const std::filesystem::path& path) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw IoError(path.string() + ": truncated checkpoint");
  return s;
}

void put_entry(std::ostream& out, const std::string& name, bool frozen, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, frozen ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& metadata) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string magic = std::string(kCheckpointFormat) + "\n";
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  put_u32(out, static_cast<std::uint32_t>(store.params().size() + store.buffers().size()));
  for (const auto& p : store.params()) put_entry(out, p.name, false, p.var.value());
  for (const auto& b : store.buffers()) put_entry(out, b.name, true, b.var.value());
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string magic = std::string(kCheckpointFormat) + "\n";
  if (get_bytes(in, static_cast<std::uint32_t>(magic.size()), path) != magic) {
    throw IoError(path.string() + ": not an " + kCheckpointFormat + " archive");
  }
  Checkpoint ckpt;
  ckpt.metadata = get_bytes(in, get_u32(in, path), path);
  const std::uint32_t count = get_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = get_bytes(in, get_u32(in, path), path);
    e.frozen = get_u32(in, path) != 0;
    const std::uint32_t rank = get_u32(in, path);
    if (rank > 8) throw IoError(path.string() + ": implausible rank for '" + e.name + "'");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_u32(in, path)));
    e.values = Tensor(shape);
    for (auto& v : e.values.values()) v = std::bit_cast<float>(get_u32(in, path));
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void restore_parameters(ParamStore& store, const Checkpoint& ckpt) {
  auto load = [&](const NamedTensorVar& target) {
    const CheckpointEntry* e = ckpt.find(target.name);
    if (!e) throw IoError("checkpoint has no entry for '" + target.name + "'");
    if (e->values.shape() != target.var.shape()) {
      throw IoError("checkpoint entry '" + target.name + "' has shape " +
                    to_string(e->values.shape()) + ", model expects " +
                    to_string(target.var.shape()));
    }
    Var v = target.var;
    v.mutable_value() = e->values;
  };
  for (const auto& p : store.params()) load(p);
  for (const auto& b : store.buffers()) load(b);
}

}  // namespace m2s
