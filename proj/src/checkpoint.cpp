#include "metaadapt/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "metaadapt/errors.hpp"

namespace metaadapt::checkpoint {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'D', 'P'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(static_cast<std::uint64_t>(v) >> (8 * i) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const ParameterVector& params) {
  std::string out(kMagic, sizeof kMagic);
  out.push_back(static_cast<char>(kFormatVersion));
  const auto& segs = params.layout.segments();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(segs.size()));
  for (const auto& s : segs) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    put_le<std::uint64_t>(out, s.offset);
    put_le<std::uint64_t>(out, s.length);
  }
  put_le<std::uint64_t>(out, params.values.size());
  for (double v : params.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ParameterVector decode(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw DataError("not a parameter file (bad magic)");
  const auto version = r.le<std::uint8_t>();
  if (version != kFormatVersion) {
    throw DataError("unsupported parameter file version " + std::to_string(version));
  }
  const auto n_segments = r.le<std::uint32_t>();
  std::vector<Segment> segs;
  for (std::uint32_t i = 0; i < n_segments; ++i) {
    const auto name_len = r.le<std::uint32_t>();
    Segment s;
    s.name = std::string(r.take(name_len));
    s.offset = r.le<std::uint64_t>();
    s.length = r.le<std::uint64_t>();
    segs.push_back(std::move(s));
  }
  ParameterVector p;
  try {
    p.layout = Layout::from_segments(std::move(segs));
  } catch (const StructuralError& e) {
    throw DataError(std::string("parameter file layout: ") + e.what());
  }
  const auto n = r.le<std::uint64_t>();
  if (n != p.layout.size()) {
    throw DataError("parameter file holds " + std::to_string(n) + " values but its layout covers " +
                    std::to_string(p.layout.size()));
  }
  p.values.resize(n);
  for (auto& v : p.values) v = std::bit_cast<double>(r.le<std::uint64_t>());
  if (!r.done()) throw DataError("trailing bytes after parameter values");
  return p;
}

void save(const ParameterVector& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << encode(params);
  if (!out) throw DataError("write failed for " + path.string());
}

ParameterVector load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace metaadapt::checkpoint
