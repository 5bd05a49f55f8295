#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace sfqi {

// Formats a double with 17 significant digits so that write/read round-trips
// reproduce the exact bit pattern.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char delim);

double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);

// Parses a line of space-separated key=value pairs.
std::map<std::string, std::string> parse_kv_line(const std::string& line);

std::string join_doubles(const Eigen::VectorXd& v, char delim = ' ');
Eigen::VectorXd parse_doubles(const std::string& line,
                              const std::string& context, char delim = ' ');

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace sfqi
