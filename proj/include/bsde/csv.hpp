#pragma once

#include <string>
#include <vector>

namespace bsde {

// shortest round-trip decimal for a double (deterministic across runs)
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(std::vector<std::string> cells);
  std::string text() const;
  // temp file + rename, so readers never observe partial output
  void write_atomic(const std::string& path) const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace bsde
