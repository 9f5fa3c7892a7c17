#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "bcd/variational.hpp"

namespace bcd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; this platform is not");
static_assert(sizeof(double) == 8, "checkpoint format assumes 8-byte doubles");

namespace {

constexpr char kMagic[4] = {'B', 'C', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void append_vector(std::vector<double>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
}

void append_matrix_rowmajor(std::vector<double>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
}

}  // namespace

// Parameters serialize in a fixed canonical order: family.mean,
// family.log_scale, family.chol_lower, net.w1, net.b1, net.w2, net.b2,
// free_logits (matrices row-major).  The optimizer flattens in the same
// order, so checkpoints and moment vectors stay aligned.
std::vector<double> flatten_state(const VariationalState& st) {
  std::vector<double> out;
  append_vector(out, st.family.mean);
  append_vector(out, st.family.log_scale);
  append_vector(out, st.family.chol_lower);
  append_matrix_rowmajor(out, st.net.w1);
  append_vector(out, st.net.b1);
  append_matrix_rowmajor(out, st.net.w2);
  append_vector(out, st.net.b2);
  append_matrix_rowmajor(out, st.free_logits);
  return out;
}

void unflatten_state(VariationalState& st, const std::vector<double>& flat) {
  std::size_t k = 0;
  const auto take_vector = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = flat.at(k++);
  };
  const auto take_matrix = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat.at(k++);
  };
  take_vector(st.family.mean);
  take_vector(st.family.log_scale);
  take_vector(st.family.chol_lower);
  take_matrix(st.net.w1);
  take_vector(st.net.b1);
  take_matrix(st.net.w2);
  take_vector(st.net.b2);
  take_matrix(st.free_logits);
  if (k != flat.size()) throw std::invalid_argument("unflatten_state: parameter count mismatch");
}

void save_checkpoint(const std::string& path, const VariationalState& st) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint32_t>(st.d));
  write_pod(os, static_cast<std::uint32_t>(st.family.variant));
  write_pod(os, static_cast<std::uint8_t>(st.equal_variance ? 1 : 0));
  write_pod(os, static_cast<std::uint8_t>(st.mean_field ? 1 : 0));
  write_pod(os, static_cast<std::uint8_t>(st.marginalized_weights ? 1 : 0));
  write_pod(os, static_cast<std::uint8_t>(0));  // pad
  write_pod(os, static_cast<std::uint32_t>(st.net.b1.size()));
  write_pod(os, st.tau);
  const std::vector<double> flat = flatten_state(st);
  write_pod(os, static_cast<std::uint64_t>(flat.size()));
  os.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

VariationalState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  const auto d = read_pod<std::uint32_t>(is);
  const auto variant = read_pod<std::uint32_t>(is);
  if (variant > 1) throw std::runtime_error("checkpoint: unknown family variant");
  const auto equal_variance = read_pod<std::uint8_t>(is);
  const auto mean_field = read_pod<std::uint8_t>(is);
  const auto marginalized = read_pod<std::uint8_t>(is);
  (void)read_pod<std::uint8_t>(is);  // pad
  const auto hidden = read_pod<std::uint32_t>(is);
  const auto tau = read_pod<double>(is);

  Rng throwaway(0);  // shapes only; every value is overwritten below
  VariationalState st = VariationalState::init(
      static_cast<int>(d), equal_variance != 0, static_cast<FamilyVariant>(variant), tau,
      static_cast<Eigen::Index>(hidden), mean_field != 0, marginalized != 0, throwaway);

  const auto count = read_pod<std::uint64_t>(is);
  std::vector<double> flat(count);
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated parameter block");
  unflatten_state(st, flat);
  return st;
}

}  // namespace bcd
