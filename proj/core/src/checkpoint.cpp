#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "io_util.hpp"
#include "osmseg/error.hpp"
#include "osmseg/network.hpp"

namespace osmseg {

namespace {

constexpr std::string_view kFormat = "osmseg-checkpoint-1";

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const Network& net) {
  if (!net.allocated()) throw InvalidArgument("cannot checkpoint an uninitialized network");
  const auto bin_path = with_suffix(stem, ".bin");
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["spec_hash"] = spec_hash(net.spec());
  j["spec"] = nlohmann::ordered_json::parse(spec_to_json(net.spec()));
  j["data_file"] = bin_path.filename().string();
  j["parameters"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  const auto& info = net.parameter_info();
  for (std::size_t p = 0; p < info.size(); ++p) {
    j["parameters"].push_back({{"name", info[p].name}, {"shape", info[p].shape}, {"offset", offset}});
    offset += net.parameters()[p].size();
  }

  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoFailure("cannot open " + bin_path.string() + " for writing");
  std::vector<std::uint64_t> buf;
  for (const auto& t : net.parameters()) {
    buf.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = to_le(std::bit_cast<std::uint64_t>(t[i]));
    bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  }
  if (!bin) throw IoFailure("failed writing " + bin_path.string());
  detail::write_text_file(with_suffix(stem, ".json"), j.dump(2) + "\n");
}

Network load_checkpoint(const std::filesystem::path& stem) {
  const auto json_path = with_suffix(stem, ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatViolation(json_path.string() + ": " + e.what());
  }
  Network net = [&] {
    try {
      if (j.at("format").get<std::string>() != kFormat) throw FormatViolation("unknown checkpoint format");
      return Network::build(spec_from_json(j.at("spec").dump()));
    } catch (const nlohmann::json::exception& e) {
      throw FormatViolation(json_path.string() + ": " + e.what());
    }
  }();
  if (j.value("spec_hash", std::string()) != spec_hash(net.spec())) {
    throw FormatViolation(json_path.string() + ": spec hash does not match the stored spec");
  }
  const auto& info = net.parameter_info();
  const auto& listed = j.at("parameters");
  if (listed.size() != info.size()) throw FormatViolation("checkpoint parameter list does not match spec");
  for (std::size_t p = 0; p < info.size(); ++p) {
    if (listed[p].at("name").get<std::string>() != info[p].name ||
        listed[p].at("shape").get<std::vector<int>>() != info[p].shape) {
      throw FormatViolation("checkpoint parameter '" + info[p].name + "' does not match spec");
    }
  }

  const auto bin_path = stem.parent_path() / j.at("data_file").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoFailure("cannot open " + bin_path.string());
  net.zero_parameters();
  std::vector<std::uint64_t> buf;
  for (auto& t : net.parameters()) {
    buf.resize(t.size());
    bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (bin.gcount() != static_cast<std::streamsize>(buf.size() * 8)) {
      throw FormatViolation(bin_path.string() + " is truncated");
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<double>(to_le(buf[i]));
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw FormatViolation(bin_path.string() + " has trailing data");
  return net;
}

}  // namespace osmseg
