#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stmoe/ecm.hpp"
#include "stmoe/model.hpp"

namespace stmoe::io {

/// Malformed or unreadable input (CSV, model file).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which CSV columns feed y, X and R. Gating columns default to the expert
/// covariates; an intercept column is prepended to X and R unless disabled.
struct DataSchema {
  std::string response = "y";
  std::vector<std::string> covariates{"x"};
  std::optional<std::vector<std::string>> gating;
  bool intercept = true;

  const std::vector<std::string>& gating_columns() const {
    return gating ? *gating : covariates;
  }
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::istream& in, const std::string& source);

/// With an empty schema.response the returned y is all zeros (design-only
/// input such as a prediction grid).
Dataset read_dataset(const std::filesystem::path& path, const DataSchema& schema);
Dataset dataset_from_table(const CsvTable& table, const DataSchema& schema,
                           const std::string& source);

/// Shortest decimal string that parses back to the same double; always uses
/// '.' as the decimal separator.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& names);
  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(double v);
  CsvWriter& cell(long v);
  CsvWriter& empty();
  void end_row();

 private:
  std::ostream& out_;
  bool first_ = true;
};

struct FitMeta {
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::uint64_t seed = 0;
  int start_index = 0;
};

struct ModelFile {
  static constexpr int kFormatVersion = 1;
  ModelParams params;
  std::optional<FitMeta> meta;
  std::optional<DataSchema> schema;
};

std::string serialize_model(const ModelFile& m);
ModelFile parse_model(const std::string& text);
void save_model(const std::filesystem::path& path, const ModelFile& m);
ModelFile load_model(const std::filesystem::path& path);

/// Writes `contents` to path, or to stdout when path is "-".
void write_text(const std::filesystem::path& path, const std::string& contents);

}  // namespace stmoe::io
