#include "fedhm/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedhm/errors.hpp"

namespace fedhm {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw FormatError(std::string("truncated weights file while reading ") + what, pos_);
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const Model& model) {
  Writer w;
  w.bytes(kWeightsMagic, sizeof(kWeightsMagic));
  w.le<std::uint64_t>(spec_hash(model.spec));
  std::uint32_t count = 0;
  for (const auto& layer : model.params) count += static_cast<std::uint32_t>(layer.size());
  w.le<std::uint32_t>(count);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    for (const auto& [pname, t] : model.params[i]) {
      const std::string name = model.spec.layers[i].name + "/" + pname;
      w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) w.le<std::uint64_t>(d);
      w.le<std::uint8_t>(kDtypeF64);
      for (double v : t.data()) w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

Model decode_weights(const std::vector<std::uint8_t>& bytes, const ModelSpec& spec) {
  Reader r(bytes);
  if (r.str(sizeof(kWeightsMagic), "magic") != std::string(kWeightsMagic, sizeof(kWeightsMagic))) {
    throw FormatError("bad weights magic", 0);
  }
  const std::size_t hash_at = r.pos();
  if (r.le<std::uint64_t>("spec hash") != spec_hash(spec)) {
    throw FormatError("weights were written for a different model spec", hash_at);
  }
  Model model{spec, std::vector<ParamMap>(spec.layers.size())};
  std::size_t expected = 0;
  for (const auto& l : spec.layers) expected += parameter_shapes(l).size();
  const std::size_t count_at = r.pos();
  if (r.le<std::uint32_t>("tensor count") != expected) {
    throw FormatError("tensor count does not match the spec", count_at);
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    for (const auto& [pname, shape] : parameter_shapes(spec.layers[i])) {
      const std::size_t at = r.pos();
      const auto len = r.le<std::uint32_t>("name length");
      const std::string name = r.str(len, "name");
      if (name != spec.layers[i].name + "/" + pname) {
        throw FormatError("unexpected tensor `" + name + "`", at);
      }
      const auto ndim = r.le<std::uint32_t>("rank");
      Shape s(ndim);
      for (auto& d : s) d = static_cast<std::size_t>(r.le<std::uint64_t>("extent"));
      if (s != shape) throw FormatError("tensor `" + name + "` has shape " + shape_string(s), at);
      const std::size_t tag_at = r.pos();
      const auto tag = r.le<std::uint8_t>("dtype");
      Tensor t(shape);
      if (tag == kDtypeF64) {
        for (auto& v : t.data()) v = std::bit_cast<double>(r.le<std::uint64_t>("payload"));
      } else if (tag == kDtypeF32) {
        for (auto& v : t.data()) v = std::bit_cast<float>(r.le<std::uint32_t>("payload"));
      } else {
        throw FormatError("unknown dtype tag " + std::to_string(tag), tag_at);
      }
      model.params[i].emplace(pname, std::move(t));
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor", r.pos());
  return model;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_weights(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Model load_weights(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes, spec);
}

}  // namespace fedhm
