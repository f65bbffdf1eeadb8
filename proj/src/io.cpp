#include "t1mr/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace t1mr {

IoError::IoError(const std::string& path, int line, const std::string& what)
    : std::runtime_error(path + (line > 0 ? ":" + std::to_string(line) : "") + ": " + what),
      path_(path),
      line_(line) {}

namespace {

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& c : out) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? "" : c.substr(b, e - b + 1);
  }
  return out;
}

double parse(const std::string& cell, const std::string& path, int line, const std::string& col) {
  double v = 0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last)
    throw IoError(path, line, "column '" + col + "': cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v)) throw IoError(path, line, "column '" + col + "': non-finite value");
  return v;
}

}  // namespace

Table read_table(const std::string& path, const std::vector<std::string>& required,
                 const std::vector<std::string>& optional) {
  std::ifstream in(path);
  if (!in) throw IoError(path, 0, "cannot open for reading");
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (t.header.empty()) {
      t.header = split(line);
      for (std::size_t k = 0; k < required.size(); ++k)
        if (k >= t.header.size() || t.header[k] != required[k])
          throw IoError(path, lineno, "missing column '" + required[k] + "'");
      const std::size_t extra = t.header.size() - required.size();
      if (extra > optional.size())
        throw IoError(path, lineno, "unexpected column '" + t.header[required.size() + optional.size()] + "'");
      for (std::size_t k = 0; k < extra; ++k)
        if (t.header[required.size() + k] != optional[k])
          throw IoError(path, lineno,
                        "expected column '" + optional[k] + "', found '" +
                            t.header[required.size() + k] + "'");
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw IoError(path, lineno,
                    "expected " + std::to_string(t.header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t k = 0; k < cells.size(); ++k) row.push_back(parse(cells[k], path, lineno, t.header[k]));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw IoError(path, 0, "empty file");
  return t;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s + '\n';
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, 0, "cannot open for writing");
  out << content;
  if (!out) throw IoError(path, 0, "write failed");
}

SpectrumData read_spectrum(const std::string& path) {
  const Table t = read_table(path, {"x", "y"}, {"yerr"});
  SpectrumData d;
  for (const auto& r : t.rows) {
    d.x.push_back(r[0]);
    d.y.push_back(r[1]);
    if (r.size() > 2) d.yerr.push_back(r[2]);
  }
  return d;
}

void write_spectrum(const std::string& path, const SpectrumData& d) {
  if (d.x.size() != d.y.size() || (!d.yerr.empty() && d.yerr.size() != d.x.size()))
    throw IoError(path, 0, "column lengths differ");
  std::string s = d.yerr.empty() ? "x,y\n" : "x,y,yerr\n";
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    std::vector<std::string> c{format_double(d.x[i]), format_double(d.y[i])};
    if (!d.yerr.empty()) c.push_back(format_double(d.yerr[i]));
    s += csv_line(c);
  }
  write_text(path, s);
}

CurveData read_curve(const std::string& path) {
  const Table t = read_table(path, {"tau_s", "signal"}, {"err"});
  CurveData d;
  for (const auto& r : t.rows) {
    d.tau.push_back(r[0]);
    d.signal.push_back(r[1]);
    if (r.size() > 2) d.err.push_back(r[2]);
  }
  return d;
}

void write_curve(const std::string& path, const CurveData& d) {
  if (d.tau.size() != d.signal.size() || (!d.err.empty() && d.err.size() != d.tau.size()))
    throw IoError(path, 0, "column lengths differ");
  std::string s = d.err.empty() ? "tau_s,signal\n" : "tau_s,signal,err\n";
  for (std::size_t i = 0; i < d.tau.size(); ++i) {
    std::vector<std::string> c{format_double(d.tau[i]), format_double(d.signal[i])};
    if (!d.err.empty()) c.push_back(format_double(d.err[i]));
    s += csv_line(c);
  }
  write_text(path, s);
}

}  // namespace t1mr
