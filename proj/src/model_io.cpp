#include "trico/model_io.hpp"

#include "binio.hpp"

namespace trico {

namespace {
constexpr std::uint16_t kModelVersion = 1;
}  // namespace

void write_model(const std::filesystem::path& path, const std::array<StudentParams, 2>& students,
                 const TeacherStrategy& teacher) {
    std::string buf = "TRCM";
    binio::put_u16(buf, kModelVersion);
    for (const auto& s : students) {
        const StudentShape shape = s.shape();
        binio::put_u32(buf, static_cast<std::uint32_t>(shape.d_in));
        binio::put_u32(buf, static_cast<std::uint32_t>(shape.hidden));
        binio::put_u32(buf, static_cast<std::uint32_t>(shape.classes));
        binio::put_f64(buf, s.dropout_rate);
        for_each_tensor(s, [&](std::span<const double> t) {
            for (double v : t) binio::put_f64(buf, v);
        });
    }
    for (double z : teacher.z) binio::put_f64(buf, z);
    binio::put_f64(buf, teacher.lr_teacher);
    binio::put_f64(buf, teacher.gate_temperature);
    binio::spit(path, buf);
}

SavedModel read_model(const std::filesystem::path& path) {
    binio::Reader r(binio::slurp(path), path.string());
    r.expect_magic("TRCM");
    r.expect_version(kModelVersion);
    SavedModel m;
    for (auto& s : m.students) {
        StudentShape shape;
        shape.d_in = r.u32("d_in");
        shape.hidden = r.u32("hidden");
        shape.classes = r.u32("classes");
        const double rate = r.f64("dropout");
        r.need(parameter_count(shape) * 8, "tensor payload");
        s = StudentParams::zeros(shape, rate);
        for_each_tensor(s, [&](std::span<double> t) {
            for (double& v : t) v = r.f64("tensor payload");
        });
    }
    for (double& z : m.teacher.z) z = r.f64("teacher z");
    m.teacher.lr_teacher = r.f64("teacher lr");
    m.teacher.gate_temperature = r.f64("gate temperature");
    r.expect_end();
    return m;
}

}  // namespace trico
