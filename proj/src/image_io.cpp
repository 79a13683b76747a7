#include "vsd/image_io.hpp"

#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "vsd/errors.hpp"

namespace vsd {

ImageU8 load_image_u8(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image: " + path.string());
  ImageU8 out;
  out.width = bgr.cols;
  out.height = bgr.rows;
  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int y = 0; y < out.height; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < out.width; ++x) {
      const std::size_t base = 3 * (static_cast<std::size_t>(y) * out.width + x);
      out.rgb[base + 0] = row[x][2];
      out.rgb[base + 1] = row[x][1];
      out.rgb[base + 2] = row[x][0];
    }
  }
  return out;
}

void save_png(const std::filesystem::path& path, const ImageU8& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      const std::size_t base = 3 * (static_cast<std::size_t>(y) * img.width + x);
      row[x][2] = img.rgb[base + 0];
      row[x][1] = img.rgb[base + 1];
      row[x][0] = img.rgb[base + 2];
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write PNG: " + path.string());
}

void save_label_png(const std::filesystem::path& path, const MatXi& labels) {
  cv::Mat gray(static_cast<int>(labels.rows()), static_cast<int>(labels.cols()), CV_8UC1);
  for (int y = 0; y < labels.rows(); ++y)
    for (int x = 0; x < labels.cols(); ++x) {
      const int v = labels(y, x);
      if (v < 0 || v > 255) throw IoError("label id out of 8-bit range: " + std::to_string(v));
      gray.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(v);
    }
  if (!cv::imwrite(path.string(), gray)) throw IoError("cannot write PNG: " + path.string());
}

MatXi load_label_png(const std::filesystem::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw IoError("cannot decode label map: " + path.string());
  MatXi labels(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y)
    for (int x = 0; x < gray.cols; ++x) labels(y, x) = gray.at<std::uint8_t>(y, x);
  return labels;
}

namespace {

std::optional<std::pair<int, int>> probe_png(const unsigned char* d, std::size_t n) {
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (n < 24 || !std::equal(sig, sig + 8, d)) return std::nullopt;
  // IHDR is always first: width/height big-endian at offsets 16/20.
  auto be32 = [&](std::size_t off) {
    return (int(d[off]) << 24) | (int(d[off + 1]) << 16) | (int(d[off + 2]) << 8) | int(d[off + 3]);
  };
  return std::make_pair(be32(16), be32(20));
}

std::optional<std::pair<int, int>> probe_jpeg(const unsigned char* d, std::size_t n) {
  if (n < 4 || d[0] != 0xff || d[1] != 0xd8) return std::nullopt;
  std::size_t i = 2;
  while (i + 9 < n) {
    if (d[i] != 0xff) return std::nullopt;
    const unsigned char marker = d[i + 1];
    if (marker == 0xff) {
      ++i;
      continue;
    }
    // SOF0..SOF15 except DHT/JPG/DAC carry the frame dimensions.
    if (marker >= 0xc0 && marker <= 0xcf && marker != 0xc4 && marker != 0xc8 && marker != 0xcc) {
      const int h = (int(d[i + 5]) << 8) | int(d[i + 6]);
      const int w = (int(d[i + 7]) << 8) | int(d[i + 8]);
      return std::make_pair(w, h);
    }
    const std::size_t seg = (std::size_t(d[i + 2]) << 8) | d[i + 3];
    if (seg < 2) return std::nullopt;
    i += 2 + seg;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::pair<int, int>> probe_image_size(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::vector<unsigned char> buf(1 << 16);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  const auto n = static_cast<std::size_t>(f.gcount());
  if (auto png = probe_png(buf.data(), n)) return png;
  return probe_jpeg(buf.data(), n);
}

}  // namespace vsd
