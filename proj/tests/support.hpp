#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spext/grid.hpp"
#include "spext/mcmc.hpp"

namespace testing {

// nx x ny lattice, unit spacing, elevation varying with both axes.
inline std::vector<spext::Site> lattice_sites(int nx, int ny, double spacing = 1.0) {
  std::vector<spext::Site> s;
  for (int r = 0; r < ny; ++r)
    for (int c = 0; c < nx; ++c)
      s.push_back({r * nx + c, c * spacing, r * spacing, 10.0 + 7.0 * c + 3.0 * r * r});
  return s;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("spext_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Matérn correlation written out independently of the library.
inline double matern_oracle(double dx, double dy, const Eigen::Matrix2d& beta, double nu) {
  const Eigen::Vector2d d(dx, dy);
  const double h = std::sqrt(d.dot(beta.inverse() * d));
  return nu == 0.5 ? std::exp(-h) : (1.0 + h + h * h / 3.0) * std::exp(-h);
}

// Target defined by a plain log-density over the whole vector.
class FunctionTarget : public spext::mcmc::Target {
 public:
  FunctionTarget(std::size_t dim, std::vector<spext::mcmc::GroupSpec> groups,
                 std::function<double(const std::vector<double>&)> logf)
      : dim_(dim), groups_(std::move(groups)), logf_(std::move(logf)) {}

  const std::vector<spext::mcmc::GroupSpec>& groups() const override { return groups_; }
  std::size_t dimension() const override { return dim_; }
  double initialize(std::span<const double> x) override {
    return logf_(std::vector<double>(x.begin(), x.end()));
  }
  spext::mcmc::Evaluation evaluate(std::span<double> x, std::size_t) override {
    return {logf_(std::vector<double>(x.begin(), x.end())), 0.0};
  }
  void accept(std::size_t) override {}

 private:
  std::size_t dim_;
  std::vector<spext::mcmc::GroupSpec> groups_;
  std::function<double(const std::vector<double>&)> logf_;
};

inline spext::mcmc::GroupSpec group(std::string name, std::size_t offset, std::size_t size, double sd) {
  spext::mcmc::GroupSpec g;
  g.name = std::move(name);
  g.offset = offset;
  g.size = size;
  g.initial_sd = sd;
  return g;
}

#ifdef SPEXT_CLI_PATH
// Runs the CLI with stdout and stderr captured in `log`; returns the exit code.
inline int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + SPEXT_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace testing
