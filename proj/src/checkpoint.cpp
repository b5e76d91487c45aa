#include "pfd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace pfd {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'D', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::string take_string(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 30)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PfdModel& model,
                     const RunConfig& cfg) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::string config = nlohmann::json(cfg).dump();
    put<std::uint64_t>(out, config.size());
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    const auto& entries = model.params().entries();
    put<std::uint64_t>(out, entries.size());
    for (const auto& [name, var] : entries) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::int64_t>(out, var.rows());
      put<std::int64_t>(out, var.cols());
      out.write(reinterpret_cast<const char*>(var.value().data()),
                static_cast<std::streamsize>(var.value().size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  LoadedCheckpoint ckpt;
  const auto config_len = take<std::uint64_t>(in);
  from_json(nlohmann::json::parse(take_string(in, config_len)), ckpt.config);
  ckpt.model = std::make_unique<PfdModel>(ckpt.config.model, ckpt.config.seed);

  ParamStore& params = ckpt.model->params();
  const auto count = take<std::uint64_t>(in);
  if (count != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = take_string(in, take<std::uint32_t>(in));
    const auto rows = take<std::int64_t>(in);
    const auto cols = take<std::int64_t>(in);
    ag::Var var = params.get(name);
    if (rows != var.rows() || cols != var.cols()) {
      throw std::runtime_error("checkpoint tensor " + name + " has the wrong shape");
    }
    in.read(reinterpret_cast<char*>(var.mutable_value().data()),
            static_cast<std::streamsize>(rows * cols * static_cast<std::int64_t>(sizeof(double))));
    if (!in) throw std::runtime_error("checkpoint truncated in tensor " + name);
  }
  return ckpt;
}

void copy_parameters(const ParamStore& src, ParamStore& dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("copy_parameters: size mismatch");
  for (const auto& [name, var] : src.entries()) {
    ag::Var target = dst.get(name);
    if (target.rows() != var.rows() || target.cols() != var.cols()) {
      throw std::invalid_argument("copy_parameters: shape mismatch for " + name);
    }
    target.mutable_value() = var.value();
  }
}

}  // namespace pfd
