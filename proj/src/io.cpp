#include "mvh/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mvh/error.hpp"

namespace mvh::io {

namespace {

constexpr char kWeightsMagic[4] = {'M', 'V', 'W', '1'};
constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}
  bool done() const { return pos_ == b_.size(); }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    require(b_.size() - pos_ >= n, ErrorKind::InvalidInput,
            what_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) + " more)");
  }
  const std::string& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

void check_magic(Reader& r, const char (&magic)[4], const std::filesystem::path& path) {
  require(r.bytes(4) == std::string(magic, 4), ErrorKind::InvalidInput,
          path.string() + ": bad magic, expected " + std::string(magic, 4));
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::InvalidInput, "cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), ErrorKind::InvalidInput, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::InvalidInput, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_mvw1(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::string out(kWeightsMagic, 4);
  for (const auto& t : tensors) {
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    require(n == t.data.size(), ErrorKind::ShapeMismatch, "tensor " + t.name + ": dims do not match data size");
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.data) put_f32(out, v);
  }
  write_atomic(path, out);
}

std::vector<NamedTensor> read_mvw1(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  check_magic(r, kWeightsMagic, path);
  std::vector<NamedTensor> out;
  while (!r.done()) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    require(rank <= 8, ErrorKind::InvalidInput, path.string() + ": implausible rank for " + t.name);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) n *= t.dims.emplace_back(r.u32());
    require(n <= bytes.size() / 4, ErrorKind::InvalidInput, path.string() + ": tensor " + t.name + " exceeds file");
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32();
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> to_tensors(const backbone::Weights& w) {
  std::vector<NamedTensor> out;
  w.visit([&](const std::string& name, const nn::Mat& m) {
    NamedTensor t{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) t.data.push_back(static_cast<float>(m.data()[i]));
    out.push_back(std::move(t));
  });
  return out;
}

void from_tensors(const std::vector<NamedTensor>& tensors, backbone::Weights& w) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  w.visit([&](const std::string& name, nn::Mat& m) {
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorKind::InvalidInput, "weights file lacks tensor " + name);
    const NamedTensor& t = *it->second;
    require(t.dims.size() == 2 && t.dims[0] == m.rows() && t.dims[1] == m.cols(), ErrorKind::ShapeMismatch,
            "tensor " + name + " has unexpected dims");
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.data[static_cast<std::size_t>(i)];
  });
}

void write_emb1(const std::filesystem::path& path, const nn::Mat& m) {
  std::string out(kEmbMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, static_cast<float>(m.data()[i]));
  write_atomic(path, out);
}

nn::Mat read_emb1(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  check_magic(r, kEmbMagic, path);
  const std::uint32_t rows = r.u32(), cols = r.u32();
  require(static_cast<std::size_t>(rows) * cols * 4 + 12 == bytes.size(), ErrorKind::InvalidInput,
          path.string() + ": size does not match header " + std::to_string(rows) + "x" + std::to_string(cols));
  nn::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
  return m;
}

void write_csv(const std::filesystem::path& path, const nn::Mat& m) {
  std::ostringstream ss;
  ss.precision(9);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) ss << (j ? "," : "") << static_cast<float>(m(i, j));
    ss << '\n';
  }
  write_atomic(path, ss.str());
}

}  // namespace mvh::io
