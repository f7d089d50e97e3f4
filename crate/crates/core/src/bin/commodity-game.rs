fn main() {
    std::process::exit(commodity_game::cli::main_with(std::env::args_os()));
}
