fn main() {
    delay_spde::exec::init_threads_from_env();
    std::process::exit(delay_spde::cli::run(std::env::args_os()));
}
