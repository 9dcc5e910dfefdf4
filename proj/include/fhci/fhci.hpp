#ifndef FHCI_FHCI_HPP
#define FHCI_FHCI_HPP

#include "fhci/error.hpp"
#include "fhci/normal.hpp"
#include "fhci/model.hpp"
#include "fhci/likelihood.hpp"
#include "fhci/estimators.hpp"
#include "fhci/mse.hpp"
#include "fhci/intervals.hpp"
#include "fhci/rng.hpp"
#include "fhci/simulation.hpp"
#include "fhci/io.hpp"

#endif  // FHCI_FHCI_HPP
