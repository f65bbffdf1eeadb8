#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace t1mr {

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, int line, const std::string& what);
  const std::string& path() const { return path_; }
  int line() const { return line_; }  // 0 when not tied to a line

 private:
  std::string path_;
  int line_;
};

// x,y[,yerr]
struct SpectrumData {
  std::vector<double> x, y, yerr;
};

// tau_s,signal[,err]
struct CurveData {
  std::vector<double> tau, signal, err;
};

SpectrumData read_spectrum(const std::string& path);
void write_spectrum(const std::string& path, const SpectrumData& d);
CurveData read_curve(const std::string& path);
void write_curve(const std::string& path, const CurveData& d);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Reads a CSV with a one-line header; `required` columns must be first, in
// order; up to `optional` more columns are accepted.
Table read_table(const std::string& path, const std::vector<std::string>& required,
                 const std::vector<std::string>& optional = {});

std::string format_double(double v);
std::string csv_line(const std::vector<std::string>& cells);

void write_text(const std::string& path, const std::string& content);

}  // namespace t1mr
