fn main() {
    std::process::exit(spectral_pinn::cli::main_with_args(std::env::args_os()));
}
