#include "seq2sick/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace seq2sick {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw InputError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(bits);
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const ModelParams& params) {
  params.validate();
  std::vector<unsigned char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.dim()));
  put_u32(out, static_cast<std::uint32_t>(params.hidden()));
  put_u32(out, static_cast<std::uint32_t>(params.src_vocab_size()));
  put_u32(out, static_cast<std::uint32_t>(params.tgt_vocab_size()));
  params.for_each_block([&](const auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) put_f64(out, block(r, c));
  });
  return out;
}

ModelParams deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader in(bytes);
  in.need(4);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw InputError("not a checkpoint: bad magic");
  in.skip(4);
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto d = in.u32(), hidden = in.u32(), src = in.u32(), tgt = in.u32();
  if (d == 0 || hidden == 0 || src == 0 || tgt == 0) throw InputError("checkpoint has a zero dimension");
  ModelParams params = ModelParams::zeros(d, hidden, src, tgt);
  std::size_t expected = 0;
  params.for_each_block([&](const auto& block) { expected += static_cast<std::size_t>(block.size()); });
  in.need(expected * 8);
  params.for_each_block([&](auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = in.f64();
  });
  if (!in.at_end()) throw InputError("trailing bytes after checkpoint payload");
  return params;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace seq2sick
