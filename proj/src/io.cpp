#include "stmoe/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace stmoe::io {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cur.push_back(ch);
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError("model file: missing field '" + where + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError("model file: bad field '" + where + key + "': " + e.what());
  }
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  throw InputError("missing column '" + name + "'");
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw InputError(source + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw InputError(source + ": empty file");
  if (t.rows.empty()) throw InputError(source + ": no data rows");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return parse_csv(in, path.string());
}

Dataset dataset_from_table(const CsvTable& table, const DataSchema& schema,
                           const std::string& source) {
  auto lookup = [&](const std::string& name) {
    try {
      return table.column(name);
    } catch (const InputError&) {
      throw InputError(source + ": missing column '" + name + "'");
    }
  };
  const auto& gcols = schema.gating_columns();
  std::vector<std::size_t> xi, ri;
  for (const auto& c : schema.covariates) xi.push_back(lookup(c));
  for (const auto& c : gcols) ri.push_back(lookup(c));
  std::optional<std::size_t> yi;
  if (!schema.response.empty()) yi = lookup(schema.response);

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const Eigen::Index off = schema.intercept ? 1 : 0;
  Dataset d;
  d.y = VectorXd::Zero(n);
  d.X.resize(n, static_cast<Eigen::Index>(xi.size()) + off);
  d.R.resize(n, static_cast<Eigen::Index>(ri.size()) + off);
  if (d.X.cols() == 0 || d.R.cols() == 0) {
    throw InputError(source + ": no covariate columns and intercept disabled");
  }
  auto cell = [&](Eigen::Index row, std::size_t col) {
    const auto& s = table.rows[static_cast<std::size_t>(row)][col];
    const auto v = parse_number(s);
    if (!v) {
      throw InputError(source + ": row " + std::to_string(row + 1) + ", column '" +
                       table.header[col] + "': '" + s + "' is not a finite number");
    }
    return *v;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    if (yi) d.y(i) = cell(i, *yi);
    if (off) {
      d.X(i, 0) = 1.0;
      d.R(i, 0) = 1.0;
    }
    for (std::size_t j = 0; j < xi.size(); ++j) {
      d.X(i, static_cast<Eigen::Index>(j) + off) = cell(i, xi[j]);
    }
    for (std::size_t j = 0; j < ri.size(); ++j) {
      d.R(i, static_cast<Eigen::Index>(j) + off) = cell(i, ri[j]);
    }
  }
  return d;
}

Dataset read_dataset(const std::filesystem::path& path, const DataSchema& schema) {
  return dataset_from_table(read_csv(path), schema, path.string());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) cell(n);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (!first_) out_ << ',';
  out_ << s;
  first_ = false;
  return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(long v) { return cell(std::to_string(v)); }

CsvWriter& CsvWriter::empty() { return cell(std::string()); }

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

std::string serialize_model(const ModelFile& m) {
  const auto& psi = m.params;
  json j;
  j["format_version"] = ModelFile::kFormatVersion;
  j["family"] = to_string(psi.family);
  j["K"] = psi.K();
  j["p"] = psi.p();
  j["q"] = psi.q();
  j["constraints"] = {{"fix_lambda_zero", psi.constraints.fix_lambda_zero},
                      {"fix_nu", psi.constraints.fix_nu ? json(*psi.constraints.fix_nu)
                                                        : json(nullptr)}};
  json alpha = json::array();
  for (Eigen::Index k = 0; k < psi.gating.alpha.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index c = 0; c < psi.gating.alpha.cols(); ++c) row.push_back(psi.gating.alpha(k, c));
    alpha.push_back(row);
  }
  j["gating"] = {{"alpha", alpha}};
  json experts = json::array();
  for (const auto& e : psi.experts) {
    json ej;
    ej["beta"] = std::vector<double>(e.beta.data(), e.beta.data() + e.beta.size());
    ej["sigma2"] = e.sigma2;
    if (psi.family == Family::STMoE) {
      ej["lambda"] = e.lambda;
      ej["nu"] = e.nu;
    }
    experts.push_back(ej);
  }
  j["experts"] = experts;
  if (m.meta) {
    j["fit"] = {{"loglik", m.meta->loglik},
                {"n_iter", m.meta->n_iter},
                {"converged", m.meta->converged},
                {"seed", m.meta->seed},
                {"start_index", m.meta->start_index}};
  }
  if (m.schema) {
    j["schema"] = {{"response", m.schema->response},
                   {"covariates", m.schema->covariates},
                   {"gating", m.schema->gating ? json(*m.schema->gating) : json(nullptr)},
                   {"intercept", m.schema->intercept}};
  }
  return j.dump(2) + "\n";
}

ModelFile parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model file: not valid JSON: ") + e.what());
  }
  const int version = require<int>(j, "format_version", "");
  if (version != ModelFile::kFormatVersion) {
    throw InputError("model file: unsupported format_version " + std::to_string(version));
  }
  ModelFile m;
  auto& psi = m.params;
  try {
    psi.family = family_from_string(require<std::string>(j, "family", ""));
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
  const auto K = require<Eigen::Index>(j, "K", "");
  const auto p = require<Eigen::Index>(j, "p", "");
  const auto q = require<Eigen::Index>(j, "q", "");
  if (K < 1 || p < 1 || q < 0) throw InputError("model file: invalid K/p/q");
  if (j.contains("constraints")) {
    const auto& c = j["constraints"];
    psi.constraints.fix_lambda_zero = c.value("fix_lambda_zero", false);
    if (c.contains("fix_nu") && !c["fix_nu"].is_null()) {
      psi.constraints.fix_nu = c["fix_nu"].get<double>();
    }
  }
  const auto alpha = require<std::vector<std::vector<double>>>(
      require<json>(j, "gating", ""), "alpha", "gating.");
  if (static_cast<Eigen::Index>(alpha.size()) != K - 1) {
    throw InputError("model file: gating.alpha must have K-1 rows");
  }
  psi.gating.alpha.resize(K - 1, q);
  for (Eigen::Index k = 0; k < K - 1; ++k) {
    const auto& row = alpha[static_cast<std::size_t>(k)];
    if (static_cast<Eigen::Index>(row.size()) != q) {
      throw InputError("model file: gating.alpha rows must have q entries");
    }
    for (Eigen::Index c = 0; c < q; ++c) psi.gating.alpha(k, c) = row[static_cast<std::size_t>(c)];
  }
  const auto experts = require<json>(j, "experts", "");
  if (!experts.is_array() || static_cast<Eigen::Index>(experts.size()) != K) {
    throw InputError("model file: experts must be an array of K entries");
  }
  for (const auto& ej : experts) {
    ExpertParams e;
    const auto beta = require<std::vector<double>>(ej, "beta", "experts[].");
    if (static_cast<Eigen::Index>(beta.size()) != p) {
      throw InputError("model file: expert beta must have p entries");
    }
    e.beta = Eigen::Map<const VectorXd>(beta.data(), p);
    e.sigma2 = require<double>(ej, "sigma2", "experts[].");
    if (psi.family == Family::STMoE) {
      e.lambda = require<double>(ej, "lambda", "experts[].");
      e.nu = require<double>(ej, "nu", "experts[].");
    } else {
      e.lambda = 0.0;
      e.nu = std::numeric_limits<double>::infinity();
    }
    psi.experts.push_back(std::move(e));
  }
  try {
    psi.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    FitMeta meta;
    meta.loglik = require<double>(f, "loglik", "fit.");
    meta.n_iter = require<int>(f, "n_iter", "fit.");
    meta.converged = require<bool>(f, "converged", "fit.");
    meta.seed = require<std::uint64_t>(f, "seed", "fit.");
    meta.start_index = f.value("start_index", 0);
    m.meta = meta;
  }
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    DataSchema schema;
    schema.response = s.value("response", std::string("y"));
    schema.covariates = require<std::vector<std::string>>(s, "covariates", "schema.");
    if (s.contains("gating") && !s["gating"].is_null()) {
      schema.gating = s["gating"].get<std::vector<std::string>>();
    }
    schema.intercept = s.value("intercept", true);
    m.schema = schema;
  }
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  if (path == "-") {
    std::cout << contents;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void save_model(const std::filesystem::path& path, const ModelFile& m) {
  write_text(path, serialize_model(m));
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace stmoe::io
