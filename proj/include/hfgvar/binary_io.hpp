#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hfgvar/error.hpp"

namespace hfgvar {

// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xf];
  return out;
}

// Little-endian host assumed; the formats document float64 LE.
class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::int64_t>(m.rows());
    put<std::int64_t>(m.cols());
    const auto* p = reinterpret_cast<const char*>(m.data());
    buf_.insert(buf_.end(), p, p + sizeof(double) * m.size());
  }
  void put_vector(const Eigen::VectorXd& v) { put_matrix(v); }

  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(const char* data, std::size_t n) : data_(data), n_(n) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  Eigen::MatrixXd get_matrix() {
    const auto r = get<std::int64_t>();
    const auto c = get<std::int64_t>();
    if (r < 0 || c < 0) fail(ErrorKind::data, "corrupt matrix header");
    need(sizeof(double) * static_cast<std::size_t>(r * c));
    Eigen::MatrixXd m(r, c);
    std::memcpy(m.data(), data_ + pos_, sizeof(double) * static_cast<std::size_t>(r * c));
    pos_ += sizeof(double) * static_cast<std::size_t>(r * c);
    return m;
  }
  Eigen::VectorXd get_vector() {
    Eigen::MatrixXd m = get_matrix();
    if (m.cols() != 1 && m.size() != 0) fail(ErrorKind::data, "corrupt vector record");
    return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
  }
  bool done() const { return pos_ == n_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) fail(ErrorKind::data, "unexpected end of binary record");
  }
  const char* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::data, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::data, "short write to '" + path + "'");
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// Row-major float64 dump used by the draw store.
inline void append_row_major(std::vector<double>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
}

inline Eigen::MatrixXd take_row_major(const std::vector<double>& in, std::size_t& pos, Eigen::Index rows,
                                      Eigen::Index cols) {
  if (pos + static_cast<std::size_t>(rows * cols) > in.size()) fail(ErrorKind::data, "draw file too short");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = in[pos++];
  }
  return m;
}

}  // namespace hfgvar
