#pragma once

// TRCM model container: "TRCM", u16 version, then for each of the two students
// u32 d_in, u32 hidden, u32 classes, f64 dropout and the f64 tensors
// w1, b1, w2, b2 (row-major), then the teacher's f64 z[3], lr and temperature.
// All integers and floats little-endian.

#include <array>
#include <filesystem>

#include "trico/student.hpp"
#include "trico/teacher.hpp"

namespace trico {

struct SavedModel {
    std::array<StudentParams, 2> students;
    TeacherStrategy teacher;
};

void write_model(const std::filesystem::path& path, const std::array<StudentParams, 2>& students,
                 const TeacherStrategy& teacher);
/// Throws FormatError (with byte offset) on bad magic/version, truncation or trailing bytes.
SavedModel read_model(const std::filesystem::path& path);

}  // namespace trico
