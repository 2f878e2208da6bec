#include "saf/ndf_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "saf/error.hpp"

namespace saf {
namespace {

constexpr char kMagic[4] = {'S', 'A', 'F', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 4 + 1 + 4;

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& buf, const std::filesystem::path& path)
      : buf_(buf), path_(path) {}

  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("truncated file: " + path_.string());
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<unsigned char>& buf_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

void write_ndf(const Epoch& epoch, const std::filesystem::path& path) {
  epoch.validate();
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kNdfVersion);
  w.u32(static_cast<std::uint32_t>(epoch.channels));
  w.u32(static_cast<std::uint32_t>(epoch.samples));
  w.f32(static_cast<float>(epoch.sample_rate_hz));
  w.u8(static_cast<std::uint8_t>(epoch.y));
  w.u32(static_cast<std::uint32_t>(epoch.subject.size()));
  w.bytes(epoch.subject.data(), epoch.subject.size());
  for (float v : epoch.x) w.f32(v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& data = w.data();
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Epoch read_ndf(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError("bad NDF magic in " + path.string());
  }
  if (buf.size() < kHeaderBytes) throw FormatError("truncated NDF header: " + path.string());
  ByteReader r(buf, path);
  r.str(4);
  const auto version = r.u32();
  if (version != kNdfVersion) {
    throw FormatError("unsupported NDF version " + std::to_string(version) + " in " +
                      path.string());
  }
  Epoch e;
  e.channels = r.u32();
  e.samples = r.u32();
  e.sample_rate_hz = r.f32();
  e.y = r.u8();
  e.subject = r.str(r.u32());
  const std::size_t count = e.channels * e.samples;
  if (r.remaining() != count * 4) {
    throw FormatError("NDF payload size mismatch in " + path.string());
  }
  e.x.resize(count);
  for (auto& v : e.x) v = r.f32();
  try {
    e.validate();
  } catch (const ValidationError& err) {
    throw FormatError(std::string(err.what()) + " in " + path.string());
  }
  return e;
}

std::pair<Manifest, EpochSet> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const auto base = path.parent_path();

  std::string line;
  if (!std::getline(in, line) || line != "path,subject,class,split") {
    throw FormatError("manifest header must be exactly 'path,subject,class,split'");
  }
  Manifest manifest;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 4) throw FormatError("expected 4 fields at " + where);
    ManifestRow row;
    row.path = fields[0];
    row.subject = fields[1];
    if (fields[2] == "0") {
      row.y = 0;
    } else if (fields[2] == "1") {
      row.y = 1;
    } else {
      throw FormatError("class must be 0 or 1 at " + where);
    }
    row.split = parse_split(fields[3]);
    if (row.path.empty() || row.subject.empty()) throw FormatError("empty field at " + where);
    manifest.rows.push_back(std::move(row));
  }

  EpochSet set;
  set.epochs.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    std::filesystem::path p(row.path);
    if (p.is_relative()) p = base / p;
    Epoch e = read_ndf(p);
    if (e.subject != row.subject || e.y != row.y) {
      throw ValidationError("manifest row disagrees with epoch header: " + row.path);
    }
    e.split = row.split;
    set.epochs.push_back(std::move(e));
  }
  set.reindex();
  return {std::move(manifest), std::move(set)};
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "path,subject,class,split\n";
  for (const auto& row : manifest.rows) {
    if (row.path.find(',') != std::string::npos || row.subject.find(',') != std::string::npos) {
      throw ValidationError("manifest fields may not contain commas");
    }
    os << row.path << ',' << row.subject << ',' << row.y << ',' << to_string(row.split) << '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << os.str();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_recording(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  ByteWriter w;
  w.bytes("SAFR", 4);
  w.u32(kRecordingVersion);
  w.u32(static_cast<std::uint32_t>(rec.channels));
  w.u64(rec.samples);
  w.f64(rec.sample_rate_hz);
  for (const auto& name : rec.channel_names) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  for (double v : rec.data) w.f64(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& data = w.data();
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Recording read_recording(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), "SAFR", 4) != 0) {
    throw FormatError("bad recording magic in " + path.string());
  }
  ByteReader r(buf, path);
  r.str(4);
  if (r.u32() != kRecordingVersion) throw FormatError("unsupported recording version in " + path.string());
  Recording rec;
  rec.channels = r.u32();
  rec.samples = r.u64();
  rec.sample_rate_hz = r.f64();
  for (std::size_t c = 0; c < rec.channels; ++c) rec.channel_names.push_back(r.str(r.u32()));
  if (rec.samples > r.remaining() / 8 || r.remaining() != rec.channels * rec.samples * 8) {
    throw FormatError("recording payload size mismatch in " + path.string());
  }
  rec.data.resize(rec.channels * rec.samples);
  for (auto& v : rec.data) v = r.f64();
  try {
    rec.validate();
  } catch (const ValidationError& err) {
    throw FormatError(std::string(err.what()) + " in " + path.string());
  }
  return rec;
}

}  // namespace saf
