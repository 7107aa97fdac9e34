#ifndef MULFA_TESTS_SUPPORT_HPP
#define MULFA_TESTS_SUPPORT_HPP

#include "mulfa/mulfa.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>
#include <string>

namespace testing_support {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mulfa_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline mulfa::Matrix random_matrix(mulfa::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                   double lo = -1.0, double hi = 1.0) {
  mulfa::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

inline mulfa::DrugCatalog random_catalog(mulfa::Rng& rng, int m, int l) {
  std::vector<std::string> ids;
  mulfa::Matrix bits(m, l);
  for (int i = 0; i < m; ++i) {
    ids.push_back("d" + std::to_string(i));
    for (int j = 0; j < l; ++j) bits(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  return mulfa::DrugCatalog::create(std::move(ids), std::move(bits));
}

inline mulfa::LabelStore random_labels(mulfa::Rng& rng, int m, int v, double rate) {
  std::vector<std::string> ids;
  std::vector<std::vector<mulfa::PairId>> pos(static_cast<std::size_t>(v));
  for (int t = 0; t < v; ++t) ids.push_back("t" + std::to_string(t));
  for (int p = 0; p < m; ++p) {
    for (int q = p + 1; q < m; ++q) {
      for (int t = 0; t < v; ++t) {
        if (rng.uniform() < rate) pos[static_cast<std::size_t>(t)].push_back({p, q});
      }
    }
  }
  return mulfa::LabelStore(m, std::move(ids), std::move(pos));
}

}  // namespace testing_support

#endif  // MULFA_TESTS_SUPPORT_HPP
