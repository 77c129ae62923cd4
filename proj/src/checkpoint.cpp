#include "distillkit/checkpoint.hpp"

#include "distillkit/corpus.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dk {

namespace {

constexpr const char* kMagic = "distillkit-checkpoint";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void append_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float read_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("checkpoint: bad integer for " + key);
  }
  return v;
}

}  // namespace

void write_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  const ModelConfig& c = data.config;
  std::ostringstream h;
  h << kMagic << '\n'
    << "format_version=" << kCheckpointFormatVersion << '\n'
    << "endianness=little\n"
    << "dtype=float32\n"
    << "vocab_size=" << c.vocab_size << '\n'
    << "d_model=" << c.d_model << '\n'
    << "n_heads=" << c.n_heads << '\n'
    << "ffn_dim=" << c.ffn_dim << '\n'
    << "enc_layers=" << c.enc_layers << '\n'
    << "dec_layers=" << c.dec_layers << '\n'
    << "max_positions=" << c.max_positions << '\n'
    << "tie_output_embedding=" << (c.tie_output_embedding ? 1 : 0) << '\n'
    << "init_std=" << format_double(c.init_std) << '\n';
  for (const auto& [key, value] : data.metadata) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint: metadata may not contain '=' in keys or newlines");
    }
    h << "meta." << key << '=' << value << '\n';
  }
  std::size_t offset = 0;
  for (const auto& p : data.parameters) {
    if (static_cast<std::size_t>(p.rows * p.cols) != p.values.size()) {
      throw std::invalid_argument("checkpoint: blob size mismatch for " + p.name);
    }
    h << "param=" << p.name << ',' << p.rows << ',' << p.cols << ',' << offset << '\n';
    offset += p.values.size() * 4;
  }
  h << "end_header\n";

  std::string body = h.str();
  body.reserve(body.size() + offset);
  for (const auto& p : data.parameters) {
    for (float v : p.values) append_le(body, v);
  }
  write_file_atomic(path, body);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  CheckpointData data;
  std::map<std::string, std::string> fields;
  struct Entry {
    std::string name;
    long long rows, cols, offset;
  };
  std::vector<Entry> entries;
  std::size_t pos = 0;
  bool ended = false;
  bool first = true;
  while (pos < raw.size()) {
    const std::size_t eol = raw.find('\n', pos);
    if (eol == std::string::npos) break;
    const std::string line = raw.substr(pos, eol - pos);
    pos = eol + 1;
    if (first) {
      if (line != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path.string());
      first = false;
      continue;
    }
    if (line == "end_header") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "param") {
      std::vector<std::string> parts;
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) parts.push_back(item);
      if (parts.size() != 4) throw std::runtime_error("checkpoint: malformed param line '" + line + "'");
      entries.push_back({parts[0], parse_int(parts[1], parts[0]), parse_int(parts[2], parts[0]),
                         parse_int(parts[3], parts[0])});
    } else if (key.rfind("meta.", 0) == 0) {
      data.metadata[key.substr(5)] = value;
    } else {
      fields[key] = value;
    }
  }
  if (!ended) throw std::runtime_error("checkpoint: header not terminated in " + path.string());

  auto field = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw std::runtime_error("checkpoint: missing header field " + key);
    return it->second;
  };
  if (parse_int(field("format_version"), "format_version") != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format version");
  }
  if (field("endianness") != "little") throw std::runtime_error("checkpoint: unsupported endianness");
  if (fields.count("dtype") && fields.at("dtype") != "float32") throw std::runtime_error("checkpoint: unsupported dtype");

  ModelConfig& c = data.config;
  c.vocab_size = static_cast<int>(parse_int(field("vocab_size"), "vocab_size"));
  c.d_model = static_cast<int>(parse_int(field("d_model"), "d_model"));
  c.n_heads = static_cast<int>(parse_int(field("n_heads"), "n_heads"));
  c.ffn_dim = static_cast<int>(parse_int(field("ffn_dim"), "ffn_dim"));
  c.enc_layers = static_cast<int>(parse_int(field("enc_layers"), "enc_layers"));
  c.dec_layers = static_cast<int>(parse_int(field("dec_layers"), "dec_layers"));
  c.max_positions = static_cast<int>(parse_int(field("max_positions"), "max_positions"));
  c.tie_output_embedding = parse_int(field("tie_output_embedding"), "tie_output_embedding") != 0;
  {
    const std::string& s = field("init_std");
    auto res = std::from_chars(s.data(), s.data() + s.size(), c.init_std);
    if (res.ec != std::errc()) throw std::runtime_error("checkpoint: bad init_std");
  }
  c.validate();

  const std::size_t blob_start = pos;
  for (const auto& e : entries) {
    if (e.rows < 0 || e.cols < 0 || e.offset < 0) throw std::runtime_error("checkpoint: negative size for " + e.name);
    const std::size_t count = static_cast<std::size_t>(e.rows * e.cols);
    const std::size_t begin = blob_start + static_cast<std::size_t>(e.offset);
    if (begin + count * 4 > raw.size()) throw std::runtime_error("checkpoint: truncated blob " + e.name);
    ParameterBlob blob{e.name, e.rows, e.cols, std::vector<float>(count)};
    const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data() + begin);
    for (std::size_t i = 0; i < count; ++i) blob.values[i] = read_le(bytes + 4 * i);
    data.parameters.push_back(std::move(blob));
  }
  return data;
}

}  // namespace dk
