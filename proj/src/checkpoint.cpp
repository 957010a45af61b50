#include "cbxt/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace cbxt {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'X', 'T'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(byte() | (byte() << 8)); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(byte()) << (8 * i);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ >= buf_.size(); }

 private:
  std::uint8_t byte() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  void need(size_t n) {
    if (pos_ + n > buf_.size()) throw LoadError("truncated checkpoint file: " + path_);
  }
  const std::string& buf_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::from_registry(const ParamRegistry& reg, const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  for (const auto& e : reg.entries()) {
    CheckpointParam p;
    p.name = e.name;
    p.tag = e.tag;
    p.shape = e.tensor->shape();
    p.data = e.tensor->data();
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

const CheckpointParam* Checkpoint::find(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void Checkpoint::apply_to(ParamRegistry& reg) const {
  for (const auto& p : params) {
    Tensor* t = reg.find(p.name);
    if (t == nullptr) throw LoadError("checkpoint has unknown parameter name: " + p.name);
    if (t->shape() != p.shape) {
      throw LoadError("checkpoint parameter " + p.name + " has shape " + shape_str(p.shape) +
                      ", model expects " + t->shape_str());
    }
    for (const auto& e : reg.entries()) {
      if (e.tensor == t && e.tag != p.tag) {
        throw LoadError("checkpoint parameter " + p.name + " tagged " + to_string(p.tag) +
                        ", model expects " + to_string(e.tag));
      }
    }
    t->data() = p.data;
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  std::string body;
  put_u32(body, ckpt.version);
  put_u32(body, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (p.name.size() > 0xffff) throw ContractError("parameter name too long: " + p.name);
    put_u16(body, static_cast<std::uint16_t>(p.name.size()));
    body.append(p.name);
    body.push_back(static_cast<char>(p.tag));
    body.push_back(static_cast<char>(p.shape.size()));
    for (int d : p.shape) put_u32(body, static_cast<std::uint32_t>(d));
    for (double v : p.data) put_f64(body, v);
  }
  put_u32(body, static_cast<std::uint32_t>(ckpt.config_text.size()));
  body.append(ckpt.config_text);
  out += body;

  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw LoadError("cannot write checkpoint file: " + tmp);
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw LoadError("failed writing checkpoint file: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw LoadError("cannot move checkpoint into place: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot read checkpoint file: " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(buf, path);

  std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw LoadError("bad checkpoint magic in " + path);
  }
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " +
                    path);
  }
  std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointParam p;
    std::uint16_t name_len = r.u16();
    p.name = r.bytes(name_len);
    std::uint8_t tag = static_cast<std::uint8_t>(r.bytes(1)[0]);
    if (tag > 2) throw LoadError("checkpoint parameter " + p.name + " has invalid tag");
    p.tag = static_cast<ParamTag>(tag);
    std::uint8_t rank = static_cast<std::uint8_t>(r.bytes(1)[0]);
    size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      p.shape.push_back(static_cast<int>(r.u32()));
      total *= static_cast<size_t>(p.shape.back());
    }
    p.data.reserve(total);
    for (size_t j = 0; j < total; ++j) p.data.push_back(r.f64());
    ckpt.params.push_back(std::move(p));
  }
  std::uint32_t cfg_len = r.u32();
  ckpt.config_text = r.bytes(cfg_len);
  return ckpt;
}

}  // namespace cbxt
