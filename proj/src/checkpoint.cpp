#include "effortgen/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "effortgen/errors.hpp"

namespace effortgen::nn {

namespace {

void write_le(std::ofstream& out, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_le(std::ifstream& in, std::span<double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw ModelError("checkpoint truncated");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header = checkpoint.header;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& name : checkpoint.names) {
    shapes.push_back(checkpoint.tensors.at(name).shape());
  }
  header["names"] = checkpoint.names;
  header["shapes"] = shapes;

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out << header.dump() << '\n';
  for (const auto& name : checkpoint.names) {
    write_le(out, checkpoint.tensors.at(name).data());
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params,
                     nlohmann::json extra) {
  Checkpoint ck;
  ck.header = std::move(extra);
  for (const Parameter* p : params) {
    if (ck.tensors.contains(p->name)) {
      throw ValidationError("duplicate parameter name " + p->name);
    }
    ck.names.push_back(p->name);
    ck.tensors.emplace(p->name, p->value);
  }
  save_checkpoint(path, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ModelError("cannot open checkpoint " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ModelError("empty checkpoint " + path.string());
  }
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(line);
    ck.names = ck.header.at("names").get<std::vector<std::string>>();
    const auto shapes = ck.header.at("shapes").get<std::vector<std::vector<std::size_t>>>();
    if (shapes.size() != ck.names.size()) {
      throw ModelError("checkpoint header: names/shapes length mismatch");
    }
    for (std::size_t i = 0; i < ck.names.size(); ++i) {
      Tensor t(shapes[i]);
      read_le(in, t.data());
      ck.tensors.emplace(ck.names[i], std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("checkpoint header in " + path.string() + ": " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ModelError("trailing bytes in checkpoint " + path.string());
  }
  ck.header.erase("names");
  ck.header.erase("shapes");
  return ck;
}

void restore_parameters(const Checkpoint& checkpoint, const ParameterList& params) {
  for (Parameter* p : params) {
    const auto it = checkpoint.tensors.find(p->name);
    if (it == checkpoint.tensors.end()) {
      throw ModelError("checkpoint lacks parameter " + p->name);
    }
    if (it->second.shape() != p->value.shape()) {
      throw ModelError("parameter " + p->name + " has shape " + shape_string(it->second.shape()) +
                       " in checkpoint, model expects " + shape_string(p->value.shape()));
    }
    p->value = it->second;
  }
}

} // namespace effortgen::nn
