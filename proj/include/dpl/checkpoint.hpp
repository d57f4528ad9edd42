#pragma once

// Checkpoint directory format: one .tns file per parameter tensor plus a
// plain-text index (tensor names, shapes, dropout rate). Optimizer state is
// persisted the same way under an "adam." prefix.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/segnet.hpp"
#include "dpl/tensor_io.hpp"

namespace dpl {

inline std::string format_float(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline void save_checkpoint(const std::string& dir, const ModelParams& params,
                            float dropout_rate) {
  std::filesystem::create_directories(dir);
  std::string index = "format dpl-checkpoint-1\n";
  index += "dropout " + format_float(dropout_rate) + "\n";
  params.for_each([&](const char* name, const Tensor& t) {
    index += std::string("tensor ") + name;
    for (uint32_t d : t.dims) index += " " + std::to_string(d);
    index += "\n";
    write_tensor(dir + "/" + name + ".tns", t);
  });
  detail::write_file_bytes(dir + "/index.txt", index);
}

struct Checkpoint {
  ModelParams params;
  float dropout_rate = kDefaultDropoutRate;
};

inline Checkpoint load_checkpoint(const std::string& dir) {
  const std::string index = detail::read_file_bytes(dir + "/index.txt");
  std::istringstream in(index);
  std::string line;
  Checkpoint ck;
  ck.params = zero_params<float>();
  bool format_seen = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "dpl-checkpoint-1") throw io_error(dir + ": unknown checkpoint format");
      format_seen = true;
    } else if (key == "dropout") {
      ls >> ck.dropout_rate;
    } else if (key == "tensor") {
      std::string name;
      ls >> name;
      std::vector<uint32_t> dims;
      uint32_t d;
      while (ls >> d) dims.push_back(d);
      const Tensor t = read_tensor(dir + "/" + name + ".tns");
      if (t.dims != dims)
        throw io_error(dir + ": tensor " + name + " shape mismatch with index");
      bool placed = false;
      ck.params.for_each([&](const char* n, Tensor& dst) {
        if (name == n) {
          if (t.dims != dst.dims)
            throw io_error(dir + ": tensor " + name + " has unexpected shape");
          dst = t;
          placed = true;
        }
      });
      if (!placed) throw io_error(dir + ": unknown tensor " + name);
    } else if (!key.empty()) {
      throw io_error(dir + ": unknown index entry '" + key + "'");
    }
  }
  if (!format_seen) throw io_error(dir + ": missing format line");
  return ck;
}

inline void save_adam_state(const std::string& dir, const AdamState& state) {
  std::filesystem::create_directories(dir);
  detail::write_file_bytes(dir + "/adam.txt", "t " + std::to_string(state.t) + "\n");
  state.m.for_each([&](const char* name, const Tensor& t) {
    write_tensor(dir + "/adam.m." + name + ".tns", t);
  });
  state.v.for_each([&](const char* name, const Tensor& t) {
    write_tensor(dir + "/adam.v." + name + ".tns", t);
  });
}

inline AdamState load_adam_state(const std::string& dir) {
  AdamState state = adam_init<float>();
  const std::string txt = detail::read_file_bytes(dir + "/adam.txt");
  std::istringstream in(txt);
  std::string key;
  in >> key >> state.t;
  if (key != "t") throw io_error(dir + ": malformed adam.txt");
  state.m.for_each([&](const char* name, Tensor& t) {
    t = read_tensor(dir + "/adam.m." + name + ".tns");
  });
  state.v.for_each([&](const char* name, Tensor& t) {
    t = read_tensor(dir + "/adam.v." + name + ".tns");
  });
  return state;
}

// FNV-1a over the serialized tensors in index order; identifies which model
// produced a set of downstream artifacts.
inline std::string model_hash(const ModelParams& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  params.for_each([&](const char*, const Tensor& t) {
    const std::string bytes = tensor_to_bytes(t);
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  });
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dpl
