#pragma once

// Geometry of the procedural face, in face units: origin at the face-ellipse
// centre, x scaled by the horizontal radius and y by the vertical radius
// (+y points down). The renderer draws with these constants and the analytic
// scorers invert them.
namespace lipemo::layout {

inline constexpr double kFaceCenterX = 0.50;  // fraction of width
inline constexpr double kFaceCenterY = 0.52;  // fraction of height
inline constexpr double kFaceRadiusX = 0.36;  // fraction of width
inline constexpr double kFaceRadiusY = 0.44;  // fraction of height

inline constexpr double kMouthCenterY = 0.42;
inline constexpr double kMouthHalfWidth = 0.40;
// Corner lift at mouth_curve = 1 (corners at t = +-1 move up by this much).
inline constexpr double kCurveLift = 0.14;
inline constexpr double kLipHalfThickness = 0.05;
inline constexpr double kOpenBase = 0.03;
inline constexpr double kOpenGain = 0.16;

inline constexpr double kBrowCenterY = -0.55;
// brow_angle = +1 raises the brows by this much.
inline constexpr double kBrowShift = 0.10;
inline constexpr double kBrowHalfThickness = 0.045;
inline constexpr double kBrowInnerX = 0.12;
inline constexpr double kBrowOuterX = 0.62;

inline constexpr double kEyeCenterX = 0.38;
inline constexpr double kEyeCenterY = -0.12;
inline constexpr double kEyeRadiusX = 0.15;
inline constexpr double kEyeRadiusBase = 0.02;
inline constexpr double kEyeRadiusGain = 0.08;

// Boundary landmark ring radius relative to the face ellipse; slightly outside
// so the hull covers the whole face.
inline constexpr double kRingScale = 1.06;
inline constexpr int kRingPoints = 24;

// Landmark index map.
inline constexpr int kBrowLeftInner = kRingPoints;
inline constexpr int kBrowLeftOuter = kRingPoints + 1;
inline constexpr int kBrowRightInner = kRingPoints + 2;
inline constexpr int kBrowRightOuter = kRingPoints + 3;
inline constexpr int kMouthLeft = kRingPoints + 4;
inline constexpr int kMouthRight = kRingPoints + 5;
inline constexpr int kMouthTop = kRingPoints + 6;
inline constexpr int kMouthBottom = kRingPoints + 7;
inline constexpr int kEyeLeft = kRingPoints + 8;
inline constexpr int kEyeRight = kRingPoints + 9;
inline constexpr int kLandmarkCount = kRingPoints + 10;

}  // namespace lipemo::layout
