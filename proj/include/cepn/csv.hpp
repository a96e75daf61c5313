#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "cepn/error.hpp"
#include "cepn/serialize.hpp"

namespace cepn {

// Minimal CSV emitter. Doubles print as %.17g so replays re-parse to the
// same bits; absent metrics print as the explicit null "NA", never 0.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw data_error(path + ": cannot open for writing");
    write_cells(header);
  }

  struct Cell {
    std::string text;
    Cell(const std::string& s) : text(s) {}
    Cell(const char* s) : text(s) {}
    Cell(double v) : text(detail::fmt_double(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(long v) : text(std::to_string(v)) {}
    Cell(std::size_t v) : text(std::to_string(v)) {}
    Cell(std::optional<double> v) : text(v ? detail::fmt_double(*v) : "NA") {}
  };

  void row(std::initializer_list<Cell> cells) { row(std::vector<Cell>(cells)); }

  void row(const std::vector<Cell>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (const auto& c : cells) s.push_back(c.text);
    write_cells(s);
  }

  ~CsvWriter() { out_.flush(); }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw data_error(path_ + ": write failed");
  }

  std::string path_;
  std::ofstream out_;
};

}  // namespace cepn
