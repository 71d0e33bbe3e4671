#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

// Container shared by dataset dumps and model checkpoints:
//   8 bytes   magic "SDRELAB1"
//   8 bytes   little-endian uint64 header length H
//   H bytes   UTF-8 JSON header
//   rest      little-endian IEEE-754 binary64 payload
namespace sdre::io {

void write_container(const std::string& path, const nlohmann::json& header,
                     std::span<const double> payload);

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

Container read_container(const std::string& path);

}  // namespace sdre::io
