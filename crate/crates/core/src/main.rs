fn main() {
    std::process::exit(adiabatic_core::cli::main_with(std::env::args_os()));
}
