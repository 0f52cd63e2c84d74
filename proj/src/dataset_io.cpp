#include "cae/manifolds.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

namespace cae {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw IdxTruncated("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

PointCloud load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                           bool normalize) {
  const auto img = slurp(images_path);
  const auto magic = read_be32(img, 0, images_path);
  if (magic != kImageMagic) {
    throw IdxBadMagic("bad image magic in " + images_path.string() + ": expected 0x00000803");
  }
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels) {
    throw IdxTruncated("image payload truncated in " + images_path.string() + ": expected " +
                       std::to_string(count * pixels) + " bytes, found " + std::to_string(img.size() - 16));
  }

  PointCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  const double s = normalize ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < count * pixels; ++i) cloud.points.data()[i] = s * img[16 + i];

  if (!labels_path.empty()) {
    const auto lab = slurp(labels_path);
    if (read_be32(lab, 0, labels_path) != kLabelMagic) {
      throw IdxBadMagic("bad label magic in " + labels_path.string() + ": expected 0x00000801");
    }
    const std::size_t n = read_be32(lab, 4, labels_path);
    if (n != count) {
      throw IdxCountMismatch("label count " + std::to_string(n) + " differs from image count " +
                             std::to_string(count));
    }
    if (lab.size() < 8 + n) throw IdxTruncated("label payload truncated in " + labels_path.string());
    cloud.labels = std::vector<int>(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  }
  return cloud;
}

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t count,
                      std::size_t rows, std::size_t cols) {
  if (pixels.size() != count * rows * cols) throw IdxError("write_idx_images: pixel count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IdxError("cannot open " + path.string() + " for writing");
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(count));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IdxError("cannot open " + path.string() + " for writing");
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::string to_csv(const PointCloud& cloud) {
  std::ostringstream os;
  os.precision(17);
  const auto m = cloud.points.cols();
  for (Eigen::Index j = 0; j < m; ++j) os << (j ? "," : "") << 'x' << j;
  if (cloud.params) {
    for (Eigen::Index j = 0; j < cloud.params->cols(); ++j) os << ",p" << j;
  }
  if (cloud.labels) os << ",label";
  os << '\n';
  for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) os << (j ? "," : "") << cloud.points(i, j);
    if (cloud.params) {
      for (Eigen::Index j = 0; j < cloud.params->cols(); ++j) os << ',' << (*cloud.params)(i, j);
    }
    if (cloud.labels) os << ',' << (*cloud.labels)[static_cast<std::size_t>(i)];
    os << '\n';
  }
  return os.str();
}

void write_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_csv(cloud);
}

PointCloud read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV " + path.string());

  std::vector<char> column_kind;  // 'x', 'p' or 'l'
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (cell == "label") {
        column_kind.push_back('l');
      } else if (!cell.empty() && (cell[0] == 'x' || cell[0] == 'p')) {
        column_kind.push_back(cell[0]);
      } else {
        throw std::runtime_error("unexpected CSV column '" + cell + "' in " + path.string());
      }
    }
  }
  const auto count = [&](char k) { return std::count(column_kind.begin(), column_kind.end(), k); };
  const auto m = count('x');
  const auto d = count('p');
  const bool has_label = count('l') > 0;
  if (m == 0) throw std::runtime_error("CSV " + path.string() + " has no x columns");

  std::vector<double> xs, ps;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(row, cell, ',')) {
      if (c >= column_kind.size()) throw std::runtime_error("too many CSV fields on row " + std::to_string(rows + 1));
      switch (column_kind[c]) {
        case 'x': xs.push_back(std::stod(cell)); break;
        case 'p': ps.push_back(std::stod(cell)); break;
        default: labels.push_back(std::stoi(cell)); break;
      }
      ++c;
    }
    if (c != column_kind.size()) throw std::runtime_error("short CSV row " + std::to_string(rows + 1));
    ++rows;
  }
  PointCloud cloud;
  cloud.points = Eigen::Map<RowMatrix>(xs.data(), static_cast<Eigen::Index>(rows), m);
  if (d > 0) {
    cloud.params = RowMatrix(Eigen::Map<RowMatrix>(ps.data(), static_cast<Eigen::Index>(rows), d));
    cloud.intrinsic_dim = static_cast<std::size_t>(d);
  }
  if (has_label) cloud.labels = std::move(labels);
  return cloud;
}

}  // namespace cae
