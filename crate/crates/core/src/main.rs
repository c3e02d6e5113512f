fn main() { std::process::exit(nonlocal_fronts::cli::main()) }
