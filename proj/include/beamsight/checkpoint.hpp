#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "beamsight/errors.hpp"
#include "beamsight/rng.hpp"
#include "beamsight/tensor.hpp"

namespace beamsight {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Ordered registry of named learnable tensors. Registration order defines the
// checkpoint payload order.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, double init_scale, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    for (auto& v : t.data()) v = rng.uniform(-init_scale, init_scale);
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor create_const(const std::string& name, Shape shape, double value) {
    Tensor t = Tensor::filled(std::move(shape), value, /*requires_grad=*/true);
    entries_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.push_back(t);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return t;
    throw DataError("ParamStore: no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  // Detached deep copies of the current values, in order.
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.push_back(t.data());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != entries_.size()) throw DataError("ParamStore::restore: size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (snap[i].size() != entries_[i].second.numel())
        throw DataError("ParamStore::restore: tensor size mismatch");
      entries_[i].second.data() = snap[i];
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// ---------------------------------------------------------------------------
// Weight checkpoint file: magic "BSW1", little-endian u32 header length, JSON
// header (tensor name -> shape map in payload order, config echo, seed), then
// the raw little-endian f64 payloads in header order.
// ---------------------------------------------------------------------------

struct Checkpoint {
  ordered_json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors,
                            const json& config_echo, std::uint64_t seed,
                            const json& extra = json::object()) {
  ordered_json header;
  header["format"] = "BSW1";
  header["seed"] = seed;
  header["config"] = config_echo;
  for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  ordered_json shapes = ordered_json::object();
  for (const auto& [name, t] : tensors) shapes[name] = t.shape();
  header["tensors"] = shapes;

  const std::string hdr = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out.write("BSW1", 4);
  const std::uint32_t hlen = static_cast<std::uint32_t>(hdr.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BSW1", 4) != 0)
    throw DataError("load_checkpoint: bad magic in " + path);
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw DataError("load_checkpoint: truncated header length");
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), hlen);
  if (!in) throw DataError("load_checkpoint: truncated header");
  Checkpoint ck;
  try {
    ck.header = ordered_json::parse(hdr);
  } catch (const std::exception& e) {
    throw DataError(std::string("load_checkpoint: header parse error: ") + e.what());
  }
  if (!ck.header.contains("tensors")) throw DataError("load_checkpoint: header lacks tensors");
  for (auto it = ck.header["tensors"].begin(); it != ck.header["tensors"].end(); ++it) {
    Shape shape = it.value().get<Shape>();
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw DataError("load_checkpoint: truncated payload for " + it.key());
    ck.tensors.emplace_back(it.key(), Tensor::from(std::move(shape), std::move(data)));
  }
  return ck;
}

// Copies checkpoint values into an existing store; names and shapes must agree.
inline void load_into(const Checkpoint& ck, ParamStore& store) {
  if (ck.tensors.size() != store.entries().size())
    throw DataError("load_into: checkpoint has " + std::to_string(ck.tensors.size()) +
                    " tensors, store expects " + std::to_string(store.entries().size()));
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    const auto& [name, t] = ck.tensors[i];
    const auto& [sname, st] = store.entries()[i];
    if (name != sname || t.shape() != st.shape())
      throw DataError("load_into: mismatch at '" + name + "' vs '" + sname + "'");
    const_cast<Tensor&>(st).data() = t.data();
  }
}

}  // namespace beamsight
