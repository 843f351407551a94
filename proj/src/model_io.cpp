#include "recert/error.hpp"
#include "recert/model.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace recert {
namespace {

constexpr const char* kMagic = "recert-model";

std::string to_hex(double x) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << std::bit_cast<std::uint64_t>(x);
  return s.str();
}

double from_hex(const std::string& word) {
  if (word.size() != 16) throw MalformedFile("model file: bad float encoding '" + word + "'");
  std::uint64_t bits = 0;
  for (char ch : word) {
    int digit;
    if (ch >= '0' && ch <= '9') {
      digit = ch - '0';
    } else if (ch >= 'a' && ch <= 'f') {
      digit = ch - 'a' + 10;
    } else {
      throw MalformedFile("model file: bad float encoding '" + word + "'");
    }
    bits = (bits << 4) | static_cast<std::uint64_t>(digit);
  }
  return std::bit_cast<double>(bits);
}

// Pulls whitespace-separated words and reports truncation as MalformedFile.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw MalformedFile(std::string("model file truncated while reading ") + what);
    return w;
  }

  long long integer(const char* what) {
    const std::string w = word(what);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(w, &used);
      if (used != w.size()) throw MalformedFile("");
      return v;
    } catch (const std::exception&) {
      throw MalformedFile(std::string("model file: expected an integer for ") + what + ", got '" +
                          w + "'");
    }
  }

  void expect(const std::string& keyword) {
    const std::string w = word(keyword.c_str());
    if (w != keyword) {
      throw MalformedFile("model file: expected '" + keyword + "', got '" + w + "'");
    }
  }

 private:
  std::istream& in_;
};

}  // namespace

void write_model(std::ostream& out, const ModelParams& params,
                 std::span<const std::string> vocabulary) {
  const ModelConfig& c = params.config;
  out << kMagic << ' ' << kModelFormatVersion << '\n';
  out << "config vocab_size " << c.vocab_size << " d_model " << c.d_model << " n_heads "
      << c.n_heads << " d_hidden " << c.d_hidden << " max_positions " << c.max_positions
      << " n_classes " << c.n_classes << " attention_scaling " << (c.attention_scaling ? 1 : 0)
      << '\n';
  out << "vocabulary " << vocabulary.size() << '\n';
  for (const std::string& token : vocabulary) out << token << '\n';
  const auto tensors = params.named_tensors();
  out << "tensors " << tensors.size() << '\n';
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name << ' ' << t->rows() << ' ' << t->cols() << '\n';
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index col = 0; col < t->cols(); ++col) {
        out << (col == 0 ? "" : " ") << to_hex((*t)(r, col));
      }
      out << '\n';
    }
  }
  out << "end\n";
}

ModelFile read_model(std::istream& in) {
  Reader r(in);
  const std::string magic = r.word("header");
  if (magic != kMagic) throw MalformedFile("not a model file (header '" + magic + "')");
  const long long version = r.integer("version");
  if (version != kModelFormatVersion) {
    throw VersionMismatch("model file version " + std::to_string(version) + ", expected " +
                          std::to_string(kModelFormatVersion));
  }
  r.expect("config");
  ModelConfig c;
  const std::pair<const char*, int*> fields[] = {
      {"vocab_size", &c.vocab_size}, {"d_model", &c.d_model},
      {"n_heads", &c.n_heads},       {"d_hidden", &c.d_hidden},
      {"max_positions", &c.max_positions}, {"n_classes", &c.n_classes}};
  for (const auto& [key, slot] : fields) {
    r.expect(key);
    *slot = static_cast<int>(r.integer(key));
  }
  r.expect("attention_scaling");
  c.attention_scaling = r.integer("attention_scaling") != 0;
  c.validate();

  ModelFile file;
  file.params = zero_params(c);
  r.expect("vocabulary");
  const long long vocab = r.integer("vocabulary size");
  if (vocab < 0) throw MalformedFile("model file: negative vocabulary size");
  file.vocabulary.reserve(static_cast<std::size_t>(vocab));
  for (long long k = 0; k < vocab; ++k) file.vocabulary.push_back(r.word("vocabulary"));

  auto tensors = file.params.named_tensors();
  r.expect("tensors");
  const long long count = r.integer("tensor count");
  if (count != static_cast<long long>(tensors.size())) {
    throw ShapeError("model file has " + std::to_string(count) + " tensors, config implies " +
                     std::to_string(tensors.size()));
  }
  for (auto& [name, t] : tensors) {
    r.expect("tensor");
    const std::string got = r.word("tensor name");
    if (got != name) throw MalformedFile("model file: expected tensor " + name + ", got " + got);
    const long long rows = r.integer("rows");
    const long long cols = r.integer("cols");
    if (rows != t->rows() || cols != t->cols()) {
      throw ShapeError("tensor " + name + " is " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", config implies " + std::to_string(t->rows()) +
                       "x" + std::to_string(t->cols()));
    }
    for (Eigen::Index i = 0; i < t->rows(); ++i) {
      for (Eigen::Index j = 0; j < t->cols(); ++j) (*t)(i, j) = from_hex(r.word("tensor data"));
    }
  }
  r.expect("end");
  return file;
}

void save_model(const std::filesystem::path& path, const ModelParams& params,
                std::span<const std::string> vocabulary) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  write_model(out, params, vocabulary);
  if (!out) throw IoError("failed writing model file " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  return read_model(in);
}

}  // namespace recert
