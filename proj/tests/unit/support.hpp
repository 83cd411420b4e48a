#pragma once

#include <unistd.h>

#include <filesystem>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "playrec/dataio.hpp"
#include "playrec/random.hpp"

namespace testing {

using namespace playrec;

struct Row {
  UserId user;
  ItemId item;
  double norm;
};

// In-memory dataset with external ids equal to the decimal internal ids.
inline Dataset make_dataset(std::size_t users, std::size_t items, const std::vector<Row>& rows,
                            const std::vector<std::pair<ItemId, CategoryId>>& memberships,
                            std::size_t num_categories, Matrix modal = {}) {
  Dataset ds;
  ds.num_users = users;
  ds.num_items = items;
  for (const auto& r : rows) ds.records.push_back({r.user, r.item, 100.0 * r.norm, r.norm});
  ds.categories = std::make_shared<CategoryIndex>(items, num_categories, memberships);
  if (modal.rows() == 0) {
    modal = Matrix(items, 2);
    for (std::size_t i = 0; i < items; ++i) {
      modal(i, 0) = 1.0;
      modal(i, 1) = static_cast<double>(i);
    }
  }
  ds.modal = std::make_shared<Matrix>(std::move(modal));
  auto u = std::make_shared<IdMap>();
  auto it = std::make_shared<IdMap>();
  for (std::size_t k = 0; k < users; ++k) u->intern(std::to_string(k));
  for (std::size_t k = 0; k < items; ++k) it->intern(std::to_string(k));
  ds.user_ids = u;
  ds.item_ids = it;
  ds.normalized = true;
  return ds;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("playrec_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
