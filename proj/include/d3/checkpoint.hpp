#pragma once

// Binary checkpoint container.
//
//   "D3CK"                      4 bytes magic
//   u32 version                 currently 1
//   i32 quality, u32 p_phi, u32 p_psi, u32 m
//   u8  kind                    0 = d3, 1 = dbase, 2 = dictionaries
//   u64 seed
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank],
//               f64 values, row-major
//
// All integers and floats are little-endian.

#include <d3/error.hpp>
#include <d3/image.hpp>
#include <d3/network.hpp>
#include <d3/train.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace d3::ckpt {

inline constexpr char kMagic[4] = {'D', '3', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

enum class ModelKind : std::uint8_t { d3 = 0, dbase = 1, dictionaries = 2 };

struct Header {
  std::uint32_t version = kVersion;
  std::int32_t quality = 0;
  std::uint32_t p_phi = 0;
  std::uint32_t p_psi = 0;
  std::uint32_t m = kBlockSize;
  ModelKind kind = ModelKind::d3;
  std::uint64_t seed = 0;
};

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

struct Container {
  Header header;
  std::vector<Tensor> tensors;

  const Tensor& find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint lacks tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return true;
    return false;
  }
};

namespace detail {

class Writer {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::is_same_v<T, double>) {
      put(std::bit_cast<std::uint64_t>(v));
    } else {
      using U = std::make_unsigned_t<T>;
      auto u = static_cast<U>(v);
      for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
  }
  void put_bytes(const char* p, std::size_t n) { bytes_.append(p, n); }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(get<std::uint64_t>());
    } else {
      using U = std::make_unsigned_t<T>;
      need(sizeof(T));
      U u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i)
        u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode(const Container& c) {
  detail::Writer w;
  w.put_bytes(kMagic, 4);
  w.put(c.header.version);
  w.put(c.header.quality);
  w.put(c.header.p_phi);
  w.put(c.header.p_psi);
  w.put(c.header.m);
  w.put(static_cast<std::uint8_t>(c.header.kind));
  w.put(c.header.seed);
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.put(d);
    for (double v : t.values) w.put(v);
  }
  return w.take();
}

inline Container decode(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not a D3 checkpoint (bad magic)");
  detail::Reader r(bytes);
  r.get_bytes(4);
  Container c;
  c.header.version = r.get<std::uint32_t>();
  if (c.header.version != kVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "unsupported checkpoint version " + std::to_string(c.header.version));
  c.header.quality = r.get<std::int32_t>();
  c.header.p_phi = r.get<std::uint32_t>();
  c.header.p_psi = r.get<std::uint32_t>();
  c.header.m = r.get<std::uint32_t>();
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw CheckpointError(CheckpointErrorKind::corrupt, "unknown model kind " + std::to_string(kind));
  c.header.kind = static_cast<ModelKind>(kind);
  c.header.seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.get_bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError(CheckpointErrorKind::corrupt, "tensor '" + t.name + "' has rank > 8");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint64_t>());
      n *= t.dims.back();
    }
    if (n > r.remaining() / 8) throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = r.get<double>();
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw CheckpointError(CheckpointErrorKind::corrupt, "trailing bytes after last tensor");
  return c;
}

inline Tensor to_tensor(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.values.push_back(m(i, j));
  return t;
}

inline Tensor to_tensor(const std::string& name, const Eigen::VectorXd& v) {
  return {name, {static_cast<std::uint64_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size())};
}

inline Eigen::MatrixXd to_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(rows) || t.dims[1] != static_cast<std::uint64_t>(cols))
    throw CheckpointError(CheckpointErrorKind::corrupt, "tensor '" + t.name + "' has unexpected shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = t.values[k++];
  return m;
}

inline Eigen::VectorXd to_vector(const Tensor& t, Eigen::Index n) {
  if (t.dims.size() != 1 || t.dims[0] != static_cast<std::uint64_t>(n))
    throw CheckpointError(CheckpointErrorKind::corrupt, "tensor '" + t.name + "' has unexpected shape");
  return Eigen::Map<const Eigen::VectorXd>(t.values.data(), n);
}

namespace detail {

inline void put_history(Container& c, const std::vector<net::EpochRecord>& h) {
  if (h.empty()) return;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(h.size()), 5);
  for (std::size_t i = 0; i < h.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) << h[i].epoch, h[i].train_loss, h[i].box_loss, h[i].l2_loss, h[i].val_psnr;
  c.tensors.push_back(to_tensor("meta.history", m));
}

inline std::vector<net::EpochRecord> get_history(const Container& c) {
  std::vector<net::EpochRecord> h;
  if (!c.has("meta.history")) return h;
  const Tensor& t = c.find("meta.history");
  if (t.dims.size() != 2 || t.dims[1] != 5)
    throw CheckpointError(CheckpointErrorKind::corrupt, "history tensor has unexpected shape");
  const Eigen::MatrixXd m = to_matrix(t, static_cast<Eigen::Index>(t.dims[0]), 5);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    h.push_back({static_cast<int>(m(i, 0)), m(i, 1), m(i, 2), m(i, 3), m(i, 4)});
  return h;
}

inline void check_dims(const Header& h) {
  if (h.m != kBlockSize) throw CheckpointError(CheckpointErrorKind::corrupt, "checkpoint block size is not 64");
  if (h.p_phi == 0 || h.p_psi == 0) throw CheckpointError(CheckpointErrorKind::corrupt, "zero layer width");
}

}  // namespace detail

inline Container pack(const net::D3Model& model) {
  net::validate(model);
  Container c;
  c.header = {kVersion, model.meta.quality, static_cast<std::uint32_t>(model.p_phi()),
              static_cast<std::uint32_t>(model.p_psi()), kBlockSize, ModelKind::d3, model.meta.seed};
  auto stage = [&](const net::SparseStage& s, const std::string& prefix) {
    c.tensors.push_back(to_tensor(prefix + ".analysis", s.analysis));
    c.tensors.push_back(to_tensor(prefix + ".synthesis", s.synthesis));
    c.tensors.push_back(to_tensor(prefix + ".theta", s.theta));
    c.tensors.push_back(to_tensor(prefix + ".inv_theta", s.pre_scale()));
  };
  stage(model.stage1, "stage1");
  stage(model.stage2, "stage2");
  detail::put_history(c, model.meta.history);
  return c;
}

inline Container pack(const net::DBaseModel& model) {
  Container c;
  c.header = {kVersion, model.meta.quality, static_cast<std::uint32_t>(model.p_phi()),
              static_cast<std::uint32_t>(model.p_psi()), kBlockSize, ModelKind::dbase, model.meta.seed};
  c.tensors.push_back(to_tensor("w1", model.w1));
  c.tensors.push_back(to_tensor("w2", model.w2));
  c.tensors.push_back(to_tensor("w3", model.w3));
  c.tensors.push_back(to_tensor("w4", model.w4));
  c.tensors.push_back(to_tensor("dropout_rate", Eigen::VectorXd(Eigen::VectorXd::Constant(1, model.dropout_rate))));
  detail::put_history(c, model.meta.history);
  return c;
}

inline Container pack(const net::DictionaryPair& dicts) {
  Container c;
  c.header = {kVersion, dicts.quality, static_cast<std::uint32_t>(dicts.phi.size()),
              static_cast<std::uint32_t>(dicts.psi.size()), kBlockSize, ModelKind::dictionaries, dicts.seed};
  c.tensors.push_back(to_tensor("phi", dicts.phi.atoms));
  c.tensors.push_back(to_tensor("phi.sparsity", Eigen::VectorXd(Eigen::VectorXd::Constant(1, dicts.phi.sparsity_weight))));
  c.tensors.push_back(to_tensor("psi", dicts.psi.atoms));
  c.tensors.push_back(to_tensor("psi.sparsity", Eigen::VectorXd(Eigen::VectorXd::Constant(1, dicts.psi.sparsity_weight))));
  return c;
}

using AnyModel = std::variant<net::D3Model, net::DBaseModel, net::DictionaryPair>;

inline AnyModel unpack(const Container& c) {
  detail::check_dims(c.header);
  const auto p_phi = static_cast<Eigen::Index>(c.header.p_phi);
  const auto p_psi = static_cast<Eigen::Index>(c.header.p_psi);
  switch (c.header.kind) {
    case ModelKind::d3: {
      net::D3Model m;
      auto stage = [&](net::SparseStage& s, const std::string& prefix, Eigen::Index p) {
        s.analysis = to_matrix(c.find(prefix + ".analysis"), p, kBlockSize);
        s.synthesis = to_matrix(c.find(prefix + ".synthesis"), kBlockSize, p);
        s.theta = to_vector(c.find(prefix + ".theta"), p);
        const Eigen::VectorXd inv = to_vector(c.find(prefix + ".inv_theta"), p);
        if ((s.theta.array() <= 0.0).any())
          throw CheckpointError(CheckpointErrorKind::corrupt, prefix + ": non-positive threshold");
        if (inv != s.pre_scale())
          throw CheckpointError(CheckpointErrorKind::corrupt, prefix + ": pre-scale is not the reciprocal of theta");
      };
      stage(m.stage1, "stage1", p_phi);
      stage(m.stage2, "stage2", p_psi);
      m.meta = {c.header.quality, c.header.seed, detail::get_history(c)};
      return m;
    }
    case ModelKind::dbase: {
      net::DBaseModel m;
      m.w1 = to_matrix(c.find("w1"), p_phi, kBlockSize);
      m.w2 = to_matrix(c.find("w2"), kBlockSize, p_phi);
      m.w3 = to_matrix(c.find("w3"), p_psi, kBlockSize);
      m.w4 = to_matrix(c.find("w4"), kBlockSize, p_psi);
      m.dropout_rate = to_vector(c.find("dropout_rate"), 1)[0];
      m.meta = {c.header.quality, c.header.seed, detail::get_history(c)};
      return m;
    }
    case ModelKind::dictionaries: {
      net::DictionaryPair d;
      d.phi.atoms = to_matrix(c.find("phi"), kBlockSize, p_phi);
      d.phi.sparsity_weight = to_vector(c.find("phi.sparsity"), 1)[0];
      d.psi.atoms = to_matrix(c.find("psi"), kBlockSize, p_psi);
      d.psi.sparsity_weight = to_vector(c.find("psi.sparsity"), 1)[0];
      d.quality = c.header.quality;
      d.seed = c.header.seed;
      return d;
    }
  }
  throw CheckpointError(CheckpointErrorKind::corrupt, "unknown model kind");
}

template <class Model>
void save_model(const Model& model, const std::filesystem::path& path) {
  write_file(path, encode(pack(model)));
}

inline AnyModel load_any(const std::filesystem::path& path) { return unpack(decode(read_file(path))); }

/// Loads a checkpoint that must hold a `Model`.
template <class Model>
Model load_model(const std::filesystem::path& path) {
  AnyModel any = load_any(path);
  if (auto* m = std::get_if<Model>(&any)) return std::move(*m);
  throw ValidationError(path.string() + " holds a different kind of checkpoint");
}

}  // namespace d3::ckpt
