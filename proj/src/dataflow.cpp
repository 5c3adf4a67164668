#include "iif/dataflow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "iif/errors.hpp"

namespace iif {

const char* to_string(TaskKind k) {
  return k == TaskKind::Regression ? "regression" : "classification";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "regression") return TaskKind::Regression;
  if (s == "classification") return TaskKind::Classification;
  throw InvalidArgument("unknown task kind '" + s + "' (regression|classification)");
}

Dataset Dataset::with_targets(Matrix new_targets) const {
  if (new_targets.rows() != features.rows())
    throw InvalidArgument("Dataset::with_targets: row count mismatch");
  Dataset d;
  d.features = features;
  d.targets = std::move(new_targets);
  d.kind = kind;
  return d;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(static_cast<std::size_t>(targets.rows()));
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    Eigen::Index c = 0;
    targets.row(i).maxCoeff(&c);
    out[static_cast<std::size_t>(i)] = static_cast<int>(c);
  }
  return out;
}

void Dataset::validate() const {
  if (features.rows() < 1) throw InvalidArgument("dataset is empty");
  if (features.rows() != targets.rows())
    throw InvalidArgument("dataset features/targets row counts differ");
  if (!features.allFinite() || !targets.allFinite())
    throw InvalidArgument("dataset contains non-finite values");
  if (kind == TaskKind::Classification) {
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      if ((targets.row(i).array() < 0.0).any() || std::abs(targets.row(i).sum() - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "classification target row " << i << " is not a probability vector";
        throw InvalidArgument(msg.str());
      }
    }
  }
}

LinearTask gen_linear(const SyntheticSpec& spec) {
  if (spec.dim < 1 || spec.n_train < 1 || spec.n_test < 1)
    throw InvalidArgument("gen_linear: sizes must be positive");
  if (spec.sigma_n < 0 || spec.sigma_s < 0)
    throw InvalidArgument("gen_linear: noise scales must be >= 0");
  Rng rng(spec.seed);
  LinearTask task;
  auto gauss = [&](int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
  };
  task.weights = gauss(spec.dim, 1).col(0);
  task.train.features = gauss(spec.n_train, spec.dim);
  task.test.features = gauss(spec.n_test, spec.dim);
  // Separate streams so the noise draw does not shift the feature draw.
  Rng train_noise = rng.fork(1);
  Rng test_noise = rng.fork(2);
  task.train.targets =
      task.train.features * task.weights +
      sample_noise(spec.train_noise, spec.sigma_n, spec.n_train, train_noise);
  task.test.targets = task.test.features * task.weights +
                      sample_noise(spec.test_noise, spec.sigma_s, spec.n_test, test_noise);
  task.train.kind = task.test.kind = TaskKind::Regression;
  return task;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw InvalidArgument("one_hot: label out of range");
    y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

ClassificationTask gen_blobs(const BlobSpec& spec) {
  if (spec.classes < 2 || spec.dim < 1 || spec.n_train < 1 || spec.n_test < 1)
    throw InvalidArgument("gen_blobs: need >= 2 classes and positive sizes");
  Rng rng(spec.seed);
  Matrix means(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    for (int j = 0; j < spec.dim; ++j) means(c, j) = rng.normal();
    means.row(c) *= spec.separation / means.row(c).norm();
  }
  auto draw = [&](int n, Rng& r) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % spec.classes;
    for (int i = n - 1; i > 0; --i)
      std::swap(labels[static_cast<std::size_t>(i)], labels[r.below(static_cast<std::size_t>(i) + 1)]);
    Dataset d;
    d.kind = TaskKind::Classification;
    d.features.resize(n, spec.dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < spec.dim; ++j)
        d.features(i, j) = means(labels[static_cast<std::size_t>(i)], j) + r.normal();
    d.targets = one_hot(labels, spec.classes);
    return d;
  };
  Rng train_rng = rng.fork(1);
  Rng test_rng = rng.fork(2);
  ClassificationTask task;
  task.train = draw(spec.n_train, train_rng);
  task.test = draw(spec.n_test, test_rng);
  return task;
}

int FlipMask::count() const {
  return static_cast<int>(std::count(flipped.begin(), flipped.end(), true));
}

std::pair<Dataset, FlipMask> flip_labels(const Dataset& data, double fraction, Rng& rng) {
  if (data.kind != TaskKind::Classification)
    throw InvalidArgument("flip_labels: dataset is not a classification set");
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("flip_labels: fraction must lie in [0, 1]");
  const int n = data.size();
  const int classes = data.target_dim();
  const int count = static_cast<int>(std::lround(fraction * n));
  if (count > 0 && classes < 2)
    throw InvalidArgument("flip_labels: single-class dataset has no different class to flip to");
  // Partial Fisher–Yates: the first `count` slots are a uniform sample
  // without replacement.
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::size_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  std::vector<int> labels = data.labels();
  FlipMask mask;
  mask.flipped.assign(static_cast<std::size_t>(n), false);
  mask.fraction = fraction;
  for (int i = 0; i < count; ++i) {
    const auto row = static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]);
    const int old = labels[row];
    int fresh = static_cast<int>(rng.below(static_cast<std::size_t>(classes - 1)));
    if (fresh >= old) ++fresh;
    labels[row] = fresh;
    mask.flipped[row] = true;
  }
  Dataset out = data;
  out.targets = one_hot(labels, classes);
  return {std::move(out), std::move(mask)};
}

Dataset subset(const Dataset& data, std::span<const int> indices) {
  if (indices.empty()) throw InvalidArgument("subset: index set is empty");
  Dataset out;
  out.kind = data.kind;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.features.resize(m, data.features.cols());
  out.targets.resize(m, data.targets.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const int i = indices[static_cast<std::size_t>(r)];
    if (i < 0 || i >= data.size()) throw InvalidArgument("subset: index out of range");
    out.features.row(r) = data.features.row(i);
    out.targets.row(r) = data.targets.row(i);
  }
  return out;
}

// IDX --------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::filesystem::path& path) {
  if (off + 4 > buf.size()) {
    std::ostringstream msg;
    msg << "IDX '" << path.string() << "' truncated in header at byte offset " << off;
    throw IoError(msg.str());
  }
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  IdxArray arr;
  arr.magic = read_be32(buf, 0, path);
  if ((arr.magic >> 8) != 0x000008) {
    std::ostringstream msg;
    msg << "IDX '" << path.string() << "': unsupported magic 0x" << std::hex << arr.magic
        << " at byte offset 0 (expected unsigned-byte payload 0x000008nn)";
    throw IoError(msg.str());
  }
  const std::size_t ndim = arr.magic & 0xff;
  if (ndim == 0) throw IoError("IDX '" + path.string() + "': zero dimensions at byte offset 3");
  std::size_t total = 1;
  for (std::size_t k = 0; k < ndim; ++k) {
    arr.dims.push_back(read_be32(buf, 4 + 4 * k, path));
    total *= arr.dims.back();
  }
  const std::size_t start = 4 + 4 * ndim;
  if (buf.size() < start + total) {
    std::ostringstream msg;
    msg << "IDX '" << path.string() << "': payload truncated at byte offset " << buf.size()
        << " (expected " << start + total << " bytes)";
    throw IoError(msg.str());
  }
  arr.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(start),
                     buf.begin() + static_cast<std::ptrdiff_t>(start + total));
  return arr;
}

void write_idx(const std::filesystem::path& path, const IdxArray& arr) {
  std::size_t total = 1;
  for (auto d : arr.dims) total *= d;
  if (total != arr.payload.size() || arr.dims.size() != (arr.magic & 0xff))
    throw InvalidArgument("write_idx: dims do not match payload/magic");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  put_be32(out, arr.magic);
  for (auto d : arr.dims) put_be32(out, d);
  out.write(reinterpret_cast<const char*>(arr.payload.data()),
            static_cast<std::streamsize>(arr.payload.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

Matrix parse_idx_images(const std::filesystem::path& path) {
  const IdxArray arr = read_idx(path);
  if (arr.magic != kIdxImageMagic) {
    std::ostringstream msg;
    msg << "IDX '" << path.string() << "': magic mismatch at byte offset 0: found 0x" << std::hex
        << arr.magic << ", expected image magic 0x" << kIdxImageMagic;
    throw IoError(msg.str());
  }
  const auto n = static_cast<Eigen::Index>(arr.dims[0]);
  const auto px = static_cast<Eigen::Index>(arr.dims[1]) * arr.dims[2];
  Matrix m(n, px);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < px; ++j)
      m(i, j) = arr.payload[static_cast<std::size_t>(i * px + j)] / 255.0;
  return m;
}

Matrix parse_idx_labels(const std::filesystem::path& path) {
  const IdxArray arr = read_idx(path);
  if (arr.magic != kIdxLabelMagic) {
    std::ostringstream msg;
    msg << "IDX '" << path.string() << "': magic mismatch at byte offset 0: found 0x" << std::hex
        << arr.magic << ", expected label magic 0x" << kIdxLabelMagic;
    throw IoError(msg.str());
  }
  Matrix m(static_cast<Eigen::Index>(arr.dims[0]), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = arr.payload[static_cast<std::size_t>(i)];
  return m;
}

Matrix parse_idx(const std::filesystem::path& path) {
  const IdxArray arr = read_idx(path);
  if (arr.magic == kIdxImageMagic) return parse_idx_images(path);
  if (arr.magic == kIdxLabelMagic) return parse_idx_labels(path);
  std::ostringstream msg;
  msg << "IDX '" << path.string() << "': magic 0x" << std::hex << arr.magic
      << " at byte offset 0 is neither images nor labels";
  throw IoError(msg.str());
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         int limit, int classes) {
  Matrix x = parse_idx_images(images);
  Matrix y = parse_idx_labels(labels);
  if (x.rows() != y.rows()) throw IoError("IDX image and label counts differ");
  Eigen::Index n = x.rows();
  if (limit > 0 && limit < n) n = limit;
  std::vector<int> lab(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) lab[static_cast<std::size_t>(i)] = static_cast<int>(y(i, 0));
  Dataset d;
  d.kind = TaskKind::Classification;
  d.features = x.topRows(n);
  d.targets = one_hot(lab, classes);
  return d;
}

// CSV --------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (int j = 0; j < data.dim(); ++j) out << (j ? "," : "") << 'f' << j;
  for (int j = 0; j < data.target_dim(); ++j) out << ",y" << j;
  out << '\n';
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) out << (j ? "," : "") << format_double(data.features(i, j));
    for (int j = 0; j < data.target_dim(); ++j) out << ',' << format_double(data.targets(i, j));
    out << '\n';
  }
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

Dataset read_dataset_csv(const std::filesystem::path& path, TaskKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  int nf = 0, ny = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty() && cell[0] == 'f' && ny == 0) ++nf;
      else if (!cell.empty() && cell[0] == 'y') ++ny;
      else throw IoError("'" + path.string() + "': unexpected header column '" + cell + "'");
    }
  }
  if (nf == 0 || ny == 0) throw IoError("'" + path.string() + "': header needs f* and y* columns");
  std::vector<double> vals;
  int rows = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    for (int j = 0; j < nf + ny; ++j) {
      double v = 0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        std::ostringstream msg;
        msg << "'" << path.string() << "' line " << lineno << ": bad number in column " << j;
        throw IoError(msg.str());
      }
      vals.push_back(v);
      p = res.ptr;
      if (j + 1 < nf + ny) {
        if (p == end || *p != ',') {
          std::ostringstream msg;
          msg << "'" << path.string() << "' line " << lineno << ": too few columns";
          throw IoError(msg.str());
        }
        ++p;
      }
    }
    ++rows;
  }
  Dataset d;
  d.kind = kind;
  d.features.resize(rows, nf);
  d.targets.resize(rows, ny);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < nf; ++j) d.features(i, j) = vals[static_cast<std::size_t>(i * (nf + ny) + j)];
    for (int j = 0; j < ny; ++j) d.targets(i, j) = vals[static_cast<std::size_t>(i * (nf + ny) + nf + j)];
  }
  d.validate();
  return d;
}

}  // namespace iif
