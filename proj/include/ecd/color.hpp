#pragma once

// sRGB <-> CIELAB under the D65 white point.

#include "ecd/core.hpp"

#include <Eigen/LU>

#include <cmath>

namespace ecd::color {

inline const Eigen::Matrix3d& rgb_to_xyz() {
    static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                      0.2126729, 0.7151522, 0.0721750,                        //
                                      0.0193339, 0.1191920, 0.9503041)
                                         .finished();
    return m;
}

inline const Eigen::Matrix3d& xyz_to_rgb() {
    static const Eigen::Matrix3d m = rgb_to_xyz().inverse();
    return m;
}

/// D65 reference white as the image of sRGB (1, 1, 1).
inline Eigen::Vector3d white() { return rgb_to_xyz() * Eigen::Vector3d::Ones(); }

inline double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }
inline double linear_to_srgb(double c) {
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace detail {
constexpr double kEps = 216.0 / 24389.0;  // (6/29)^3
constexpr double kDelta = 6.0 / 29.0;
inline double f(double t) { return t > kEps ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0; }
inline double f_inv(double t) { return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0); }
}  // namespace detail

inline Eigen::Vector3d srgb_to_lab(const Eigen::Vector3d& rgb) {
    const Eigen::Vector3d lin(srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2]));
    const Eigen::Vector3d xyz = rgb_to_xyz() * lin;
    const Eigen::Vector3d w = white();
    const double fx = detail::f(xyz[0] / w[0]);
    const double fy = detail::f(xyz[1] / w[1]);
    const double fz = detail::f(xyz[2] / w[2]);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

/// Inverse of srgb_to_lab; out-of-gamut colors are returned unclamped.
inline Eigen::Vector3d lab_to_srgb(const Eigen::Vector3d& lab) {
    const double fy = (lab[0] + 16.0) / 116.0;
    const double fx = fy + lab[1] / 500.0;
    const double fz = fy - lab[2] / 200.0;
    const Eigen::Vector3d w = white();
    const Eigen::Vector3d xyz(w[0] * detail::f_inv(fx), w[1] * detail::f_inv(fy), w[2] * detail::f_inv(fz));
    const Eigen::Vector3d lin = xyz_to_rgb() * xyz;
    return {linear_to_srgb(lin[0]), linear_to_srgb(lin[1]), linear_to_srgb(lin[2])};
}

}  // namespace ecd::color
