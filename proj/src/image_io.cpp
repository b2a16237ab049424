#include "cxr/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cxr/error.hpp"

namespace cxr {

RgbImage decode_rgb(const std::filesystem::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kDecode, path.string() + ": " + e.what());
  }
  if (raw.empty()) throw Error(ErrorCode::kDecode, "cannot decode " + path.string());

  if (raw.depth() == CV_16U) {
    raw.convertTo(raw, CV_8U, 1.0 / 257.0);
  } else if (raw.depth() != CV_8U) {
    throw Error(ErrorCode::kDecode, path.string() + ": unsupported sample depth");
  }

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw Error(ErrorCode::kDecode, path.string() + ": unsupported channel count");
  }

  RgbImage image;
  image.width = static_cast<std::size_t>(rgb.cols);
  image.height = static_cast<std::size_t>(rgb.rows);
  image.pixels.resize(image.width * image.height * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(y);
    std::copy_n(row, image.width * 3, image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat rgb(static_cast<int>(image.height), static_cast<int>(image.width), CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kIo, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void write_grey_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& grey) {
  cv::Mat mat(static_cast<int>(height), static_cast<int>(width), CV_8UC1, const_cast<std::uint8_t*>(grey.data()));
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kIo, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

Tensor to_chw(const RgbImage& image) {
  Tensor out({3, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(image.at(y, x, c));
    }
  }
  return out;
}

}  // namespace cxr
