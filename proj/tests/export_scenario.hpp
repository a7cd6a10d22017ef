#pragma once

// A fully deterministic state for export golden files. No sealed records,
// so every transaction (and so every audit tx hash) is reproducible.

#include "support.hpp"

namespace medledger::test {

inline EhrState export_scenario_state() {
    Population pop;
    auto patient = pop.add("export-patient", Role::Patient);
    auto doctor = pop.add("export-doctor", Role::Doctor);
    auto pending = pop.add("export-pending", Role::Patient, false);
    auto& c = pop.chain;
    c.run(patient, cmd::UpdateProfile{patient.address(), {"Lima, \"Ana\"\nJr.", "1985-03-02", ""}});
    c.run(doctor, cmd::UpdateProfile{doctor.address(), {"Dr. <Ruiz> & Sons", "", "Cardiology\\Heart"}});
    c.run(pop.admin, cmd::AddMedication{"Amoxicillin", "capsule", "500mg"});
    c.run(pop.admin, cmd::AddMedication{"Paracetamol, extra", "tablet", "1g"});
    c.run(pop.admin, cmd::AddLabParameter{"Glucose", "mg/dL", 70, 110});
    c.run(pop.admin, cmd::AddLabParameter{"Potassium", "mmol/L", 3.5, 5.1});
    c.run(pending, cmd::GrantAccess{doctor.address()});
    c.run(doctor, cmd::AddMedication{"Nope", "x", "y"});
    c.run(patient, cmd::RequestAppointment{doctor.address(), {parse_date("2026-01-05"), 2}, "first visit"});
    return c.state();
}

}  // namespace medledger::test
