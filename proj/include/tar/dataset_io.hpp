#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tar/data.hpp"
#include "tar/ppm.hpp"

namespace tar {

// Disk layout: <root>/<domain>/<split>/<label>/<id>.ppm with a flat
// manifest.csv at the root. The manifest is the source of truth when
// loading; image files it names must exist.

namespace detail {

struct ManifestRow {
  std::int64_t id;
  Domain domain;
  Split split;
  Label label;
  std::uint64_t seed;
};

inline std::filesystem::path sample_path(const std::filesystem::path& root, const ManifestRow& r) {
  return root / domain_name(r.domain) / split_name(r.split) / label_name(r.label) /
         (std::to_string(r.id) + ".ppm");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  return fields;
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& root_str) {
  const std::filesystem::path root(root_str);
  std::filesystem::create_directories(root);

  std::vector<std::pair<detail::ManifestRow, const ImageSample*>> rows;
  auto collect = [&](const DomainSplits& splits) {
    for (Split s : {Split::base, Split::fewshot, Split::test}) {
      for (const ImageSample& sample : splits.at(s)) {
        validate_sample(sample);
        rows.push_back({{sample.id, sample.domain, s, sample.label, sample.seed}, &sample});
      }
    }
  };
  collect(ds.reals);
  for (const auto& [kind, splits] : ds.fakes) {
    (void)kind;
    collect(splits);
  }

  for (const auto& [row, sample] : rows) {
    const auto path = detail::sample_path(root, row);
    std::filesystem::create_directories(path.parent_path());
    save_ppm(sample->pixels, path.string());
  }

  std::ofstream manifest(root / "manifest.csv");
  if (!manifest) throw FormatError((root / "manifest.csv").string() + ": cannot open for writing");
  manifest << "id,domain,split,label,seed\n";
  for (const auto& [row, sample] : rows) {
    (void)sample;
    manifest << row.id << "," << domain_name(row.domain) << "," << split_name(row.split) << ","
             << label_name(row.label) << "," << row.seed << "\n";
  }
  if (!manifest) throw FormatError((root / "manifest.csv").string() + ": write failed");
}

inline Dataset load_dataset(const std::string& root_str) {
  const std::filesystem::path root(root_str);
  const auto manifest_path = root / "manifest.csv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw FormatError(manifest_path.string() + ": cannot open");

  std::string line;
  if (!std::getline(manifest, line)) throw FormatError(manifest_path.string() + ": empty file");
  if (line != "id,domain,split,label,seed") {
    throw FormatError(manifest_path.string() + ": unexpected header '" + line + "'");
  }

  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 5) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": expected " +
                        "5 fields, got " + std::to_string(fields.size()));
    }
    detail::ManifestRow row;
    try {
      row.id = std::stoll(fields[0]);
      row.domain = domain_from_name(fields[1]);
      row.split = split_from_name(fields[2]);
      row.label = label_from_name(fields[3]);
      row.seed = std::stoull(fields[4]);
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception&) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) +
                        ": malformed numeric field");
    }

    ImageSample sample;
    sample.id = row.id;
    sample.domain = row.domain;
    sample.label = row.label;
    sample.seed = row.seed;
    sample.pixels = load_ppm(detail::sample_path(root, row).string());
    validate_sample(sample);

    DomainSplits& splits =
        row.domain == Domain::real ? ds.reals : ds.fakes[row.domain];
    splits.at(row.split).push_back(std::move(sample));
  }
  return ds;
}

}  // namespace tar
