#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "fusion/infrared.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

// Undecoded IR pixel data as stored on disk: row-major frames, 8 or 16 bits
// per pixel (16-bit stored little-endian). Intensities normalize to [0,1] by
// the native maximum code value when materialized.
struct IrRaw {
    Index height = 0;
    Index width = 0;
    Index frame_count = 0;
    int bit_depth = 8;
    std::vector<std::uint8_t> bytes;

    IrSequence to_sequence() const;
};

// Packed raw container: 16-byte header of little-endian u32 (magic, H, W, F)
// followed by row-major frames. The magic selects the pixel depth.
inline constexpr std::uint32_t kIrRawMagic8 = 0x38524946;   // "FIR8"
inline constexpr std::uint32_t kIrRawMagic16 = 0x36524946;  // "FIR6"

void save_ir_raw(const std::string& path, const IrRaw& raw);
IrRaw load_ir_raw(const std::string& path);

// Grayscale PGM (P5), 8-bit or 16-bit (big-endian payload per the format).
void save_pgm(const std::string& path, const Eigen::MatrixXd& image, int bit_depth = 8);
void load_pgm(const std::string& path, Eigen::MatrixXd& image, int* bit_depth = nullptr);

// Grayscale PNG, 8 or 16 bit.
void load_png_gray(const std::string& path, Eigen::MatrixXd& image, int* bit_depth = nullptr);
void save_png_gray(const std::string& path, const Eigen::MatrixXd& image);

// 8-bit RGB PNG from three [0,1] channels of identical extents.
void save_png_rgb(const std::string& path, const Eigen::MatrixXd& r, const Eigen::MatrixXd& g,
                  const Eigen::MatrixXd& b);

// Loads a sample's IR data. A path ending in .ir or .raw is read as a packed
// raw file; a directory is read as sequentially numbered .png/.pgm frames.
IrRaw load_ir(const std::string& path);

// Quantizes [0,1] frames to an IrRaw at the given depth.
IrRaw quantize_sequence(const IrSequence& seq, int bit_depth);

}  // namespace fusion
