#include "pvg/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace pvg {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
    throw std::invalid_argument("principal point must lie inside the image");
}

CameraIntrinsics CameraIntrinsics::downsampled(int factor) const {
  if (factor <= 1) return *this;
  CameraIntrinsics out = *this;
  const double s = 1.0 / factor;
  out.fx = fx * s;
  out.fy = fy * s;
  out.cx = cx * s;
  out.cy = cy * s;
  out.width = width / factor;
  out.height = height / factor;
  return out;
}

void CameraExtrinsics::validate(double tolerance) const {
  const Mat3 gram = rotation.transpose() * rotation;
  if (!((gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tolerance) ||
      std::abs(rotation.determinant() - 1.0) > tolerance)
    throw std::invalid_argument("extrinsic rotation is not orthonormal");
  if (!translation.allFinite()) throw std::invalid_argument("extrinsic translation is not finite");
}

CameraExtrinsics CameraExtrinsics::inverse() const {
  CameraExtrinsics inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

CameraExtrinsics CameraExtrinsics::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraExtrinsics ext;
  ext.rotation.row(0) = right.transpose();
  ext.rotation.row(1) = down.transpose();
  ext.rotation.row(2) = forward.transpose();
  ext.translation = -(ext.rotation * eye);
  return ext;
}

void CameraFrame::validate() const {
  camera.intrinsics.validate();
  camera.extrinsics.validate();
  const auto& intr = camera.intrinsics;
  if (image.height() != intr.height || image.width() != intr.width || image.channels() != 3)
    throw std::invalid_argument("frame '" + name + "': image dimensions do not match intrinsics");
  if (!sparse_inv_depth.empty()) {
    if (sparse_inv_depth.height() != intr.height || sparse_inv_depth.width() != intr.width)
      throw std::invalid_argument("frame '" + name + "': depth dimensions do not match intrinsics");
    for (float v : sparse_inv_depth.values())
      if (!(v >= 0.0f)) throw std::invalid_argument("frame '" + name + "': negative inverse depth");
  }
  if (sky_mask && (sky_mask->height() != intr.height || sky_mask->width() != intr.width))
    throw std::invalid_argument("frame '" + name + "': sky mask dimensions do not match intrinsics");
}

Vec3 world_to_camera(const Vec3& x_world, const CameraExtrinsics& ext) {
  return ext.rotation * x_world + ext.translation;
}

std::optional<PixelProjection> project_point(const Vec3& x_cam, const CameraIntrinsics& intr, double near_clip) {
  if (!(x_cam.z() > near_clip)) return std::nullopt;
  const double inv_z = 1.0 / x_cam.z();
  return PixelProjection{Vec2(intr.fx * x_cam.x() * inv_z + intr.cx, intr.fy * x_cam.y() * inv_z + intr.cy),
                         x_cam.z()};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& x_cam, const CameraIntrinsics& intr) {
  const double inv_z = 1.0 / x_cam.z();
  const double inv_z2 = inv_z * inv_z;
  Eigen::Matrix<double, 2, 3> J;
  J << intr.fx * inv_z, 0.0, -intr.fx * x_cam.x() * inv_z2,
       0.0, intr.fy * inv_z, -intr.fy * x_cam.y() * inv_z2;
  return J;
}

Mat3 quat_to_rotation(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return R;
}

Mat3 build_covariance(const Vec3& scale, const Quat& rot) {
  const Mat3 M = quat_to_rotation(rot) * scale.asDiagonal();
  return M * M.transpose();
}

std::optional<Mat2> project_covariance(const Mat3& cov, const Vec3& x_cam, const CameraIntrinsics& intr,
                                       const CameraExtrinsics& ext, double dilation, double near_clip) {
  if (!(x_cam.z() > near_clip)) return std::nullopt;
  const Eigen::Matrix<double, 2, 3> T = projection_jacobian(x_cam, intr) * ext.rotation;
  Mat2 out = T * cov * T.transpose();
  out(0, 1) = out(1, 0) = 0.5 * (out(0, 1) + out(1, 0));
  out(0, 0) += dilation;
  out(1, 1) += dilation;
  return out;
}

Vec3 pixel_ray(double u, double v, const Camera& cam) {
  const auto& intr = cam.intrinsics;
  const Vec3 d_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return (cam.extrinsics.rotation.transpose() * d_cam).normalized();
}

}  // namespace pvg
