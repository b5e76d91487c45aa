#ifndef PFD_CHECKPOINT_HPP_
#define PFD_CHECKPOINT_HPP_

#include <filesystem>
#include <memory>

#include "pfd/config.hpp"
#include "pfd/model.hpp"

namespace pfd {

// Binary named-tensor archive:
//   "PFDCKPT1" | u64 config length | run config JSON |
//   u64 tensor count | { u32 name length | name | i64 rows | i64 cols | f64 data[rows*cols] }*
// Integers are little-endian; values are stored as raw IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const PfdModel& model,
                     const RunConfig& cfg);

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<PfdModel> model;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter values from `src` to `dst`; names and shapes must match.
void copy_parameters(const ParamStore& src, ParamStore& dst);

}  // namespace pfd

#endif  // PFD_CHECKPOINT_HPP_
