#include "fastlane/checkpoint.hpp"

#include <fstream>

#include "fastlane/errors.hpp"

namespace fastlane {

namespace {
constexpr std::uint32_t kArchiveVersion = 1;
}

void save_archive(const std::string& path, const nlohmann::json& header, const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  io::write_magic(out, "FLCK");
  io::write_u32(out, kArchiveVersion);
  io::write_string(out, header.dump());
  io::write_u64(out, params.size());
  for (const auto& p : params) {
    io::write_string(out, p.name);
    write_tensor(out, p.value);
  }
  if (!out) throw FormatError("write failed for " + path);
}

Archive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  io::expect_magic(in, "FLCK", path);
  const auto version = io::read_u32(in);
  if (version != kArchiveVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Archive a;
  try {
    a.header = nlohmann::json::parse(io::read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  const auto n = io::read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = io::read_string(in);
    a.tensors.emplace_back(std::move(name), read_tensor(in));
  }
  return a;
}

void load_into(const Archive& archive, ParameterStore& store) {
  for (const auto& [name, t] : archive.tensors) store.add(name, t);
}

}  // namespace fastlane
