#include "core/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace cpinn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Normalized inside-membership of an axis-aligned ellipse: positive inside,
// 0 on the boundary, negative outside.
double ellipse_membership(const Vec& x, double cx, double cy, double rx, double ry) {
  const double dx = (x[0] - cx) / rx;
  const double dy = (x[1] - cy) / ry;
  return 1.0 - std::sqrt(dx * dx + dy * dy);
}

double band_membership(const Vec& x, double nx, double ny, double offset, double half_width) {
  return (half_width - std::abs(nx * x[0] + ny * x[1] - offset)) / half_width;
}

}  // namespace

double region_signed_distance(const NoiseModel& m, const Vec& x) {
  require(m.kind == NoiseModel::Kind::hetero_regions_2d, ErrorCode::invalid_argument,
          "region membership is defined for the 2D region noise model only");
  require(x.size() == 2, ErrorCode::dimension_mismatch,
          "2D region noise expects 2D points");
  double d = -1e30;
  switch (m.scenario) {
    case 'A':
      d = std::max(ellipse_membership(x, -0.45, 0.40, 0.35, 0.25),
                   ellipse_membership(x, 0.50, -0.45, 0.30, 0.40));
      break;
    case 'B':
      d = std::max(band_membership(x, 0.7071067811865476, 0.7071067811865476, 0.0, 0.25),
                   ellipse_membership(x, 0.55, 0.55, 0.25, 0.25));
      break;
    case 'C':
      d = std::max({ellipse_membership(x, -0.55, -0.55, 0.30, 0.20),
                    ellipse_membership(x, 0.00, 0.35, 0.40, 0.20),
                    ellipse_membership(x, 0.60, -0.20, 0.20, 0.35)});
      break;
    default:
      fail(ErrorCode::invalid_argument,
           std::string("unknown 2D noise scenario '") + m.scenario + "'; valid: A, B, C");
  }
  return d;
}

double noise_std(const NoiseModel& m, const Vec& x) {
  switch (m.kind) {
    case NoiseModel::Kind::none:
      return 0.0;
    case NoiseModel::Kind::homoskedastic:
      return m.sigma;
    case NoiseModel::Kind::hetero_bumps_1d: {
      require(x.size() == 1, ErrorCode::dimension_mismatch,
              "1D bump noise expects 1D points");
      require(m.centers.size() == m.widths.size(), ErrorCode::invalid_argument,
              "bump centers and widths must pair up");
      const double t = x[0];
      double s = 0.0;
      for (std::size_t r = 0; r < m.centers.size(); ++r) {
        const double dt = t - m.centers[r];
        if (std::abs(dt) <= m.widths[r]) {
          const double z = dt / m.widths[r];
          s += m.bump * std::exp(-0.5 * z * z);
        }
      }
      return s;
    }
    case NoiseModel::Kind::hetero_regions_2d:
      return m.region_bump * sigmoid(m.sharpness * region_signed_distance(m, x));
  }
  return 0.0;
}

std::function<bool(const Vec&)> elevated_region_predicate(const NoiseModel& m) {
  switch (m.kind) {
    case NoiseModel::Kind::hetero_bumps_1d:
      return [m](const Vec& x) { return noise_std(m, x) > 0.0; };
    case NoiseModel::Kind::hetero_regions_2d:
      return [m](const Vec& x) { return region_signed_distance(m, x) >= 0.0; };
    default:
      return [](const Vec&) { return false; };
  }
}

LabeledSplit sample_dataset(const PdeProblem& problem, int n_train, int n_cal,
                            int n_test, const NoiseModel& noise, std::uint64_t seed,
                            const SampleOptions& opts) {
  require(n_train >= 1, ErrorCode::invalid_argument, "n_train must be positive");
  require(n_cal >= 0 && n_test >= 0, ErrorCode::invalid_argument,
          "split sizes must be non-negative");

  LabeledSplit split;
  split.problem = problem_name_string(problem.name);
  split.noise = noise;
  split.seed = seed;

  auto draw = [&](LabeledSet& set, int n, const char* stream, bool on_grid) {
    set.X.resize(problem.dim, n);
    set.u.resize(n);
    Rng rng(derive_seed(seed, stream));
    for (int j = 0; j < n; ++j) {
      if (on_grid) {
        require(problem.dim == 1, ErrorCode::invalid_argument,
                "grid test inputs are supported for 1D problems only");
        set.X(0, j) = problem.lo[0] + (problem.hi[0] - problem.lo[0]) * (j + 0.5) / n;
      } else {
        for (int i = 0; i < problem.dim; ++i) {
          set.X(i, j) = rng.uniform(problem.lo[i], problem.hi[i]);
        }
      }
      const Vec x = set.X.col(j);
      double u = exact_solution(problem, x);
      if (noise.kind == NoiseModel::Kind::homoskedastic ||
          noise.kind == NoiseModel::Kind::hetero_bumps_1d ||
          noise.kind == NoiseModel::Kind::hetero_regions_2d) {
        u += noise.sigma * rng.normal();
      }
      if (noise.heteroskedastic()) {
        u += noise_std(noise, x) * rng.normal();
      }
      set.u[j] = u;
    }
  };

  draw(split.train, n_train, "train", false);
  if (n_cal > 0) draw(split.cal, n_cal, "cal", false);
  else { split.cal.X.resize(problem.dim, 0); split.cal.u.resize(0); }
  if (n_test > 0) draw(split.test, n_test, "test", opts.test_on_grid);
  else { split.test.X.resize(problem.dim, 0); split.test.u.resize(0); }
  return split;
}

nlohmann::ordered_json noise_to_json(const NoiseModel& m) {
  nlohmann::ordered_json j;
  switch (m.kind) {
    case NoiseModel::Kind::none: j["kind"] = "none"; break;
    case NoiseModel::Kind::homoskedastic: j["kind"] = "homoskedastic"; break;
    case NoiseModel::Kind::hetero_bumps_1d: j["kind"] = "hetero_bumps_1d"; break;
    case NoiseModel::Kind::hetero_regions_2d: j["kind"] = "hetero_regions_2d"; break;
  }
  j["sigma"] = m.sigma;
  if (m.kind == NoiseModel::Kind::hetero_bumps_1d) {
    j["bump"] = m.bump;
    j["centers"] = m.centers;
    j["widths"] = m.widths;
  }
  if (m.kind == NoiseModel::Kind::hetero_regions_2d) {
    j["scenario"] = std::string(1, m.scenario);
    j["region_bump"] = m.region_bump;
    j["sharpness"] = m.sharpness;
  }
  return j;
}

NoiseModel noise_from_json(const nlohmann::json& j) {
  NoiseModel m;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "none") m.kind = NoiseModel::Kind::none;
    else if (kind == "homoskedastic") m.kind = NoiseModel::Kind::homoskedastic;
    else if (kind == "hetero_bumps_1d") m.kind = NoiseModel::Kind::hetero_bumps_1d;
    else if (kind == "hetero_regions_2d") m.kind = NoiseModel::Kind::hetero_regions_2d;
    else fail(ErrorCode::parse_error, "unknown noise kind '" + kind + "'");
    m.sigma = j.value("sigma", 0.0);
    m.bump = j.value("bump", 0.3);
    if (j.contains("centers")) m.centers = j.at("centers").get<std::vector<double>>();
    if (j.contains("widths")) m.widths = j.at("widths").get<std::vector<double>>();
    if (j.contains("scenario")) {
      const std::string s = j.at("scenario").get<std::string>();
      require(s.size() == 1, ErrorCode::parse_error, "scenario must be a single letter");
      m.scenario = s[0];
    }
    m.region_bump = j.value("region_bump", 0.3);
    m.sharpness = j.value("sharpness", 8.0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, std::string("malformed noise model: ") + e.what());
  }
  return m;
}

namespace {

void write_set_csv(const LabeledSet& set, int dim, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
  for (int i = 0; i < dim; ++i) out << "x" << (i + 1) << ",";
  out << "u\n";
  char buf[32];
  for (int j = 0; j < set.size(); ++j) {
    for (int i = 0; i < dim; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", set.X(i, j));
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", set.u[j]);
    out << buf << "\n";
  }
  require(out.good(), ErrorCode::io_error, "failed writing " + path);
}

LabeledSet read_set_csv(const std::string& path, int dim) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse_error,
          path + ": empty file, expected a header");

  // header check: x1..xd,u
  {
    std::stringstream ss(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    std::vector<std::string> expected;
    for (int i = 0; i < dim; ++i) expected.push_back("x" + std::to_string(i + 1));
    expected.push_back("u");
    for (const auto& e : expected) {
      bool found = false;
      for (const auto& c : cols) found = found || c == e;
      require(found, ErrorCode::parse_error,
              path + ":1: missing column '" + e + "' in header '" + line + "'");
    }
    require(cols.size() == expected.size(), ErrorCode::parse_error,
            path + ":1: expected " + std::to_string(expected.size()) +
                " columns (x1..x" + std::to_string(dim) + ",u), got " +
                std::to_string(cols.size()));
  }

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    int field_no = 0;
    while (std::getline(ss, field, ',')) {
      ++field_no;
      try {
        std::size_t pos = 0;
        const double v = std::stod(field, &pos);
        require(pos == field.size(), ErrorCode::parse_error,
                path + ":" + std::to_string(line_no) + ": field " +
                    std::to_string(field_no) + " ('" + field + "') is not a number");
        row.push_back(v);
      } catch (const std::invalid_argument&) {
        fail(ErrorCode::parse_error, path + ":" + std::to_string(line_no) + ": field " +
                                         std::to_string(field_no) + " ('" + field +
                                         "') is not a number");
      }
    }
    require(static_cast<int>(row.size()) == dim + 1, ErrorCode::parse_error,
            path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                " fields, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }

  LabeledSet set;
  set.X.resize(dim, static_cast<int>(rows.size()));
  set.u.resize(static_cast<int>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (int i = 0; i < dim; ++i) set.X(i, static_cast<int>(j)) = rows[j][static_cast<std::size_t>(i)];
    set.u[static_cast<Eigen::Index>(j)] = rows[j][static_cast<std::size_t>(dim)];
  }
  return set;
}

}  // namespace

void save_split(const LabeledSplit& split, const std::string& prefix) {
  const PdeProblem problem = make_problem(split.problem);
  write_set_csv(split.train, problem.dim, prefix + ".train.csv");
  write_set_csv(split.cal, problem.dim, prefix + ".cal.csv");
  write_set_csv(split.test, problem.dim, prefix + ".test.csv");
  nlohmann::ordered_json meta;
  meta["problem"] = split.problem;
  meta["seed"] = split.seed;
  meta["noise"] = noise_to_json(split.noise);
  meta["counts"] = {{"train", split.train.size()},
                    {"cal", split.cal.size()},
                    {"test", split.test.size()}};
  std::ofstream out(prefix + ".meta.json");
  require(out.good(), ErrorCode::io_error, "cannot open " + prefix + ".meta.json for writing");
  out << meta.dump(2) << "\n";
}

LabeledSplit load_split(const std::string& prefix) {
  LabeledSplit split;
  nlohmann::json meta;
  {
    std::ifstream in(prefix + ".meta.json");
    require(in.good(), ErrorCode::io_error, "cannot open " + prefix + ".meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::parse_error, prefix + ".meta.json: " + e.what());
    }
  }
  try {
    split.problem = meta.at("problem").get<std::string>();
    split.seed = meta.at("seed").get<std::uint64_t>();
    split.noise = noise_from_json(meta.at("noise"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse_error, prefix + ".meta.json: " + e.what());
  }
  const PdeProblem problem = make_problem(split.problem);
  split.train = read_set_csv(prefix + ".train.csv", problem.dim);
  split.cal = read_set_csv(prefix + ".cal.csv", problem.dim);
  split.test = read_set_csv(prefix + ".test.csv", problem.dim);
  return split;
}

}  // namespace cpinn
