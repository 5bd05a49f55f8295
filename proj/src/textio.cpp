#include "sfqi/textio.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sfqi/errors.hpp"

namespace sfqi {

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream stream(s);
  while (std::getline(stream, item, delim)) out.push_back(item);
  if (!s.empty() && s.back() == delim) out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(ErrorKind::Schema, "bad number '" + s + "' in " + context);
  return v;
}

long long parse_int(const std::string& s, const std::string& context) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    fail(ErrorKind::Schema, "bad integer '" + s + "' in " + context);
  return v;
}

std::map<std::string, std::string> parse_kv_line(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream stream(line);
  std::string token;
  while (stream >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Schema, "expected key=value, got '" + token + "'");
    out[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return out;
}

std::string join_doubles(const Eigen::VectorXd& v, char delim) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out.push_back(delim);
    out += format_double(v(i));
  }
  return out;
}

Eigen::VectorXd parse_doubles(const std::string& line,
                              const std::string& context, char delim) {
  const auto parts = split(line, delim);
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = parse_double(parts[i], context);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << contents;
  if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

}  // namespace sfqi
