#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "tar/data.hpp"
#include "tar/model.hpp"

namespace tar {

// Accuracy evaluation over immutable model snapshots, plus the matrix
// structure behind the zero-shot and transfer tables.

struct SampleRecord {
  std::int64_t id = 0;
  Domain domain = Domain::real;
  double a1 = 0.0;
  double a2 = 0.0;
  Label predicted = Label::real;
  Label actual = Label::real;
};

struct EvalResult {
  double accuracy = 0.0;
  std::int64_t correct = 0;
  std::vector<SampleRecord> records;
};

template <typename T>
EvalResult evaluate(const TarModel<T>& model, const std::vector<ImageSample>& samples,
                    std::int64_t batch_size = 64) {
  if (samples.empty()) throw ConfigError("evaluate needs a non-empty sample set");
  if (batch_size < 1) throw ConfigError("evaluate batch size must be >= 1");
  const std::int64_t s = model.config.input_size;

  EvalResult result;
  result.records.reserve(samples.size());
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t count = std::min(batch_size, n - start);
    Tensor<T> batch({count, 3, s, s});
    for (std::int64_t b = 0; b < count; ++b) {
      const ImageSample& sample = samples[static_cast<std::size_t>(start + b)];
      validate_sample(sample);
      if (sample.pixels.dim(1) != s) {
        throw ContractError("sample " + std::to_string(sample.id) + " is " +
                            shape_string(sample.pixels.shape()) + ", model expects side " +
                            std::to_string(s));
      }
      for (std::int64_t i = 0; i < sample.pixels.numel(); ++i) {
        batch[b * sample.pixels.numel() + i] = static_cast<T>(sample.pixels[i]);
      }
    }

    const Tensor<T> latent = encode_infer(model, batch);
    const Tensor<T> acts = per_class_activation(latent, model.config.latent_half_channels);
    for (std::int64_t b = 0; b < count; ++b) {
      const ImageSample& sample = samples[static_cast<std::size_t>(start + b)];
      SampleRecord rec;
      rec.id = sample.id;
      rec.domain = sample.domain;
      rec.a1 = static_cast<double>(acts(b, 0));
      rec.a2 = static_cast<double>(acts(b, 1));
      rec.predicted = classify_pair(rec.a1, rec.a2);
      rec.actual = sample.label;
      if (rec.predicted == rec.actual) ++result.correct;
      result.records.push_back(rec);
    }
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(n);
  return result;
}

// ------------------------------------------------------------------
// Accuracy tables

struct AccuracyMatrix {
  std::vector<std::string> row_names;
  std::vector<Domain> columns;
  std::vector<std::vector<double>> cells;  // [row][column], in [0,1]
  std::string base_domain;                 // flagged column, may be empty

  void validate() const {
    if (cells.size() != row_names.size()) throw ContractError("matrix row count mismatch");
    for (const auto& row : cells) {
      if (row.size() != columns.size()) throw ContractError("matrix column count mismatch");
      for (double v : row) {
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ContractError("matrix cell " + std::to_string(v) + " outside [0,1]");
        }
      }
    }
  }

  double row_average(std::size_t r) const {
    double total = 0.0;
    for (double v : cells.at(r)) total += v;
    return total / static_cast<double>(cells.at(r).size());
  }
};

// One row: the model's test accuracy on every fake domain's test split.
template <typename T>
AccuracyMatrix zero_shot_matrix(const TarModel<T>& model, const Dataset& ds,
                                Domain base_domain, const std::string& row_name = "") {
  AccuracyMatrix m;
  m.base_domain = domain_name(base_domain);
  m.row_names.push_back(row_name.empty() ? m.base_domain : row_name);
  std::vector<double> row;
  for (const auto& [kind, splits] : ds.fakes) {
    (void)splits;
    m.columns.push_back(kind);
    row.push_back(evaluate(model, labeled_set(ds, kind, Split::test)).accuracy);
  }
  m.cells.push_back(std::move(row));
  m.validate();
  return m;
}

// Stacks per-stage matrices into the transfer table. Rows keep their
// snapshot names; deltas against the previous row are rendered, with the
// first row's delta slot emitted as "—".
inline AccuracyMatrix stack_matrices(const std::vector<AccuracyMatrix>& parts) {
  if (parts.empty()) throw ConfigError("stack_matrices needs at least one matrix");
  AccuracyMatrix out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const AccuracyMatrix& p = parts[i];
    if (p.columns != out.columns) throw ContractError("matrix column sets differ, cannot stack");
    for (std::size_t r = 0; r < p.row_names.size(); ++r) {
      out.row_names.push_back(p.row_names[r]);
      out.cells.push_back(p.cells[r]);
    }
  }
  out.validate();
  return out;
}

namespace detail {

inline std::string format_cell(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6) << v;
  return out.str();
}

}  // namespace detail

// CSV: header "row,<domains...>,avg", cells at 6 decimals. The average
// column is emitted for readers and ignored (recomputed) on parse.
inline std::string matrix_to_csv(const AccuracyMatrix& m) {
  m.validate();
  std::ostringstream out;
  out << "row";
  for (Domain d : m.columns) out << "," << domain_name(d);
  out << ",avg\n";
  for (std::size_t r = 0; r < m.row_names.size(); ++r) {
    out << m.row_names[r];
    for (double v : m.cells[r]) out << "," << detail::format_cell(v);
    out << "," << detail::format_cell(m.row_average(r)) << "\n";
  }
  return out.str();
}

inline AccuracyMatrix matrix_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("matrix csv: empty input");
  AccuracyMatrix m;
  {
    std::istringstream header(line);
    std::string field;
    if (!std::getline(header, field, ',') || field != "row") {
      throw FormatError("matrix csv: header must start with 'row', got '" + field + "'");
    }
    std::vector<std::string> names;
    while (std::getline(header, field, ',')) names.push_back(field);
    if (names.empty() || names.back() != "avg") {
      throw FormatError("matrix csv: header must end with 'avg'");
    }
    names.pop_back();
    for (const auto& n : names) {
      try {
        m.columns.push_back(domain_from_name(n));
      } catch (const Error& e) {
        throw FormatError(std::string("matrix csv: ") + e.what());
      }
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    if (!std::getline(row, field, ',')) continue;
    m.row_names.push_back(field);
    std::vector<double> cells;
    while (std::getline(row, field, ',')) {
      try {
        cells.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw FormatError("matrix csv line " + std::to_string(line_no) +
                          ": malformed number '" + field + "'");
      }
    }
    if (cells.size() != m.columns.size() + 1) {
      throw FormatError("matrix csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(m.columns.size() + 1) + " numbers, got " +
                        std::to_string(cells.size()));
    }
    cells.pop_back();  // drop the avg column, it is derived
    m.cells.push_back(std::move(cells));
  }
  m.validate();
  return m;
}

// Markdown table with per-domain delta-vs-previous-row in parentheses;
// the first row has no predecessor and shows "—" per the table contract.
inline std::string matrix_to_markdown(const AccuracyMatrix& m) {
  m.validate();
  std::ostringstream out;
  out << "| model |";
  for (Domain d : m.columns) {
    out << " " << domain_name(d);
    if (m.base_domain == domain_name(d)) out << " (base)";
    out << " |";
  }
  out << " avg |\n|---|";
  for (std::size_t i = 0; i < m.columns.size() + 1; ++i) out << "---|";
  out << "\n";
  for (std::size_t r = 0; r < m.row_names.size(); ++r) {
    out << "| " << m.row_names[r] << " |";
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      out << " " << detail::format_cell(m.cells[r][c]);
      if (r == 0) {
        out << " (—)";
      } else {
        const double delta = m.cells[r][c] - m.cells[r - 1][c];
        out << " (" << (delta >= 0 ? "+" : "") << detail::format_cell(delta) << ")";
      }
      out << " |";
    }
    out << " " << detail::format_cell(m.row_average(r)) << " |\n";
  }
  return out.str();
}

}  // namespace tar
