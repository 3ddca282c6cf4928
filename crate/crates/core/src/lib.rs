#![no_std]
//! Infinitely divisible moving averages: Lévy measures, kernels, adaptive
//! quadrature, integral criteria for the semimartingale property and series
//! simulation of paths with their canonical decomposition.

extern crate alloc;

pub mod quadrature;
pub mod special;
pub mod kernels;
pub mod levy;
pub mod criteria;
pub mod simulation;
